//! Stage-one speed planning through a signalized approach.
//!
//! The eco planner times the stop-bar crossing into a predicted green window
//! using half-cosine speed ramps. The baseline driver holds the speed limit,
//! brakes at a constant rate for a red light and launches at a constant rate
//! on green.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::corridor::{GreenWindow, SignalTiming};
use crate::error::{Error, Result};
use crate::profile::{DrivingMode, SpeedProfile};

const MAX_STEPS: usize = 20_000;
const SCAN_STEP: f64 = 0.1;
const TOL: f64 = 1e-9;
/// Clearance from window edges and the stop bar that absorbs rounding in
/// sampled positions.
const EDGE: f64 = 1e-6;

/// Which arrival inside the feasible part of a window the eco planner aims for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ArrivalTarget {
    /// Arrival whose cruise speed is closest to the current speed; ties go to
    /// the lower cruise speed.
    LeastDeviation,
    /// Fixed fraction of the feasible arrival interval, 0 = earliest.
    Fraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerTuning {
    /// Preferred peak acceleration of eco ramps, m/s^2.
    pub eco_accel: f64,
    /// Preferred peak deceleration magnitude of eco ramps, m/s^2.
    pub eco_decel: f64,
    /// Lowest admissible cruise speed as a fraction of the limit.
    pub cruise_floor_fraction: f64,
    /// Clearance kept from both window edges when possible, s.
    pub arrival_margin: f64,
    pub arrival_target: ArrivalTarget,
}

impl Default for PlannerTuning {
    fn default() -> Self {
        Self {
            eco_accel: 1.0,
            eco_decel: 1.0,
            cruise_floor_fraction: 0.7,
            arrival_margin: 1.0,
            arrival_target: ArrivalTarget::LeastDeviation,
        }
    }
}

/// Vehicle state at the start of an approach and the window it aims for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerContext {
    /// Absolute time of the first planned sample, s.
    pub t_now: f64,
    pub current_position: f64,
    pub current_speed: f64,
    pub stopbar_position: f64,
    pub speed_limit: f64,
    pub green_window: GreenWindow,
    pub a_max: f64,
    pub a_min: f64,
    pub tuning: PlannerTuning,
}

impl PlannerContext {
    pub fn validate(&self) -> Result<()> {
        let t = &self.tuning;
        let ok = self.current_speed >= 0.0
            && self.current_speed <= self.speed_limit + TOL
            && self.stopbar_position > self.current_position
            && self.a_min < 0.0
            && self.a_max > 0.0
            && self.speed_limit > 0.0
            && t.eco_accel > 0.0
            && t.eco_accel <= self.a_max
            && t.eco_decel > 0.0
            && t.eco_decel <= -self.a_min
            && (0.0..=1.0).contains(&t.cruise_floor_fraction)
            && t.arrival_margin >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid planner context {self:?}")))
        }
    }

    pub fn distance(&self) -> f64 {
        self.stopbar_position - self.current_position
    }

    pub fn floor_speed(&self) -> f64 {
        self.tuning.cruise_floor_fraction * self.speed_limit
    }
}

/// Half-cosine ramp from `v0` to `vf` over `duration` seconds, sampled at
/// 1 Hz (`duration + 1` samples, both endpoints included).
pub fn trig_segment(v0: f64, vf: f64, duration: usize) -> Result<Vec<f64>> {
    if duration == 0 || !(v0 >= 0.0) || !(vf >= 0.0) || !v0.is_finite() || !vf.is_finite() {
        return Err(Error::invalid(format!(
            "trig segment needs non-negative speeds and duration >= 1 (v0={v0}, vf={vf}, T={duration})"
        )));
    }
    let n = duration as f64;
    Ok((0..=duration)
        .map(|k| {
            if k == duration {
                vf
            } else {
                v0 + (vf - v0) * 0.5 * (1.0 - (PI * k as f64 / n).cos())
            }
        })
        .collect())
}

/// Peak acceleration magnitude of a half-cosine ramp.
fn ramp_peak(dv: f64, duration: usize) -> f64 {
    dv.abs() * PI / (2.0 * duration as f64)
}

/// Shortest ramp whose peak acceleration stays within `limit`.
fn ramp_steps(dv: f64, limit: f64) -> usize {
    ((dv.abs() * PI / (2.0 * limit)) - TOL).ceil().max(1.0) as usize
}

/// Ramp from the current speed to `cruise_speed` over `ramp` steps, then
/// hold it; the stop bar is reached `arrival` seconds after the start.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Glide {
    ramp: usize,
    cruise_speed: f64,
    arrival: f64,
}

/// Solves `dist = ramp (v0 + vc) / 2 + (arrival - ramp) vc` for the shortest
/// ramp within the gentle bounds, falling back to the hard bounds.
fn solve_glide(v0: f64, dist: f64, arrival: f64, gentle: (f64, f64), hard: (f64, f64)) -> Option<Glide> {
    if !(arrival >= 1.0) {
        return None;
    }
    let max_ramp = (arrival + TOL).floor() as usize;
    for (acc, dec) in [gentle, hard] {
        for ramp in 1..=max_ramp {
            let r = ramp as f64;
            let vc = (dist - r * v0 / 2.0) / (arrival - r / 2.0);
            if vc < 0.0 {
                continue;
            }
            let limit = if vc > v0 { acc } else { dec };
            if ramp_peak(vc - v0, ramp) <= limit + TOL {
                return Some(Glide {
                    ramp,
                    cruise_speed: vc,
                    arrival,
                });
            }
        }
    }
    None
}

fn glide_speeds(v0: f64, g: &Glide) -> Result<Vec<f64>> {
    let mut speeds = trig_segment(v0, g.cruise_speed, g.ramp)?;
    let last = (g.arrival - TOL).ceil().max(g.ramp as f64) as usize;
    speeds.resize(last + 1, g.cruise_speed);
    Ok(speeds)
}

#[derive(Debug, Clone, Copy)]
enum Approach {
    Cruise,
    Glide(Glide),
}

impl PlannerContext {
    fn gentle(&self) -> (f64, f64) {
        (self.tuning.eco_accel, self.tuning.eco_decel)
    }

    fn hard(&self) -> (f64, f64) {
        (self.a_max, -self.a_min)
    }

    fn cruise_fits(&self, w: &GreenWindow) -> bool {
        let v0 = self.current_speed;
        if v0 < self.floor_speed() - TOL || v0 <= 0.0 {
            return false;
        }
        w.contains(self.t_now + self.distance() / v0)
    }

    fn admissible(&self, g: &Glide) -> bool {
        g.cruise_speed >= self.floor_speed() - TOL && g.cruise_speed <= self.speed_limit + TOL
    }

    /// Best glide into `w` according to the arrival target.
    fn best_glide(&self, w: &GreenWindow) -> Option<Glide> {
        let lo = (w.earliest_pass - self.t_now + EDGE).max(1.0);
        let hi = w.latest_pass - self.t_now - EDGE;
        if hi < lo {
            return None;
        }
        let dist = self.distance();
        let v0 = self.current_speed;
        let solve = |a: f64| {
            solve_glide(v0, dist, a, self.gentle(), self.hard()).filter(|g| self.admissible(g))
        };
        let n = ((hi - lo) / SCAN_STEP).ceil() as usize;
        let feasible: Vec<Glide> = (0..=n)
            .map(|i| (lo + i as f64 * SCAN_STEP).min(hi))
            .filter_map(solve)
            .collect();
        let (first, last) = (feasible.first()?.arrival, feasible.last()?.arrival);
        let margin = self.tuning.arrival_margin.min((last - first) / 2.0);
        let (first, last) = (first + margin, last - margin);
        match self.tuning.arrival_target {
            ArrivalTarget::Fraction(f) => {
                let target = first + f.clamp(0.0, 1.0) * (last - first);
                solve(target).or_else(|| {
                    feasible
                        .iter()
                        .min_by(|a, b| (a.arrival - target).abs().total_cmp(&(b.arrival - target).abs()))
                        .copied()
                })
            }
            ArrivalTarget::LeastDeviation => {
                // Deviation is monotone in arrival time, so the optimum is the
                // current-speed arrival clamped into the margin-trimmed range.
                let natural = if v0 > 0.0 { dist / v0 } else { f64::INFINITY };
                let target = natural.clamp(first, last);
                let mut best = solve(target);
                for g in feasible.iter().filter(|g| g.arrival >= first - TOL && g.arrival <= last + TOL) {
                    best = match best {
                        Some(b) if !better(g, &b, v0) => Some(b),
                        _ => Some(*g),
                    };
                }
                best
            }
        }
    }

    fn stop_approach(&self) -> Result<Vec<f64>> {
        let v0 = self.current_speed;
        let dist = self.distance() - EDGE;
        let vt = v0.max(self.floor_speed());
        let (acc, dec) = self.gentle();
        let (hard_acc, hard_dec) = self.hard();
        let dec_gentle = ramp_steps(vt, dec);
        let dec_hard = ramp_steps(vt, hard_dec);
        let ramp_gentle = ramp_steps(vt - v0, if vt > v0 { acc } else { dec });
        let ramp_order = (ramp_gentle..=ramp_gentle + 40).chain((1..ramp_gentle).rev());
        let ramps: Vec<usize> = ramp_order.collect();
        for n_dec in (dec_hard.min(dec_gentle)..=dec_gentle).rev() {
            for &ramp in &ramps {
                let (r, nd) = (ramp as f64, n_dec as f64);
                let hold = ((dist - r * (v0 + vt) / 2.0 - nd * vt / 2.0) / vt - TOL).ceil().max(0.0);
                let vc = (dist - r * v0 / 2.0) / (r / 2.0 + hold + nd / 2.0);
                if !(vc > 0.0 && vc <= self.speed_limit + TOL) {
                    continue;
                }
                let ramp_limit = if vc > v0 { hard_acc } else { hard_dec };
                if ramp_peak(vc - v0, ramp) > ramp_limit + TOL || ramp_peak(vc, n_dec) > hard_dec + TOL {
                    continue;
                }
                let mut speeds = trig_segment(v0, vc, ramp)?;
                speeds.extend(std::iter::repeat_n(vc, hold as usize));
                speeds.extend_from_slice(&trig_segment(vc, 0.0, n_dec)?[1..]);
                return Ok(speeds);
            }
        }
        Err(Error::invalid(format!(
            "cannot stop within {dist:.1} m from {v0:.2} m/s"
        )))
    }

    fn stop_plan(&self, windows: &[GreenWindow]) -> Result<SpeedProfile> {
        let mut speeds = self.stop_approach()?;
        let stopped_at = self.t_now + (speeds.len() - 1) as f64;
        let window = windows
            .iter()
            .find(|w| w.latest_pass >= stopped_at + 1.0)
            .ok_or(Error::NoWindowInHorizon {
                start_cycle: windows.first().map_or(0, |w| w.cycle_index),
                cycles: windows.len(),
            })?;
        let depart = (window.earliest_pass.max(stopped_at) - self.t_now - TOL).ceil() as usize;
        speeds.resize(depart + 1, 0.0);
        let launch = ramp_steps(self.speed_limit, self.tuning.eco_accel);
        speeds.extend_from_slice(&trig_segment(0.0, self.speed_limit, launch)?[1..]);
        let n = speeds.len();
        SpeedProfile::new(self.t_now, speeds, vec![DrivingMode::Stop; n])
    }

    fn cruise_plan(&self) -> Result<SpeedProfile> {
        let v0 = self.current_speed;
        let steps = (self.distance() / v0 - TOL).ceil().max(1.0) as usize;
        SpeedProfile::new(self.t_now, vec![v0; steps + 1], vec![DrivingMode::Cruise; steps + 1])
    }

    fn glide_plan(&self, g: &Glide) -> Result<SpeedProfile> {
        let speeds = glide_speeds(self.current_speed, g)?;
        let mode = if g.cruise_speed > self.current_speed {
            DrivingMode::SpeedUp
        } else {
            DrivingMode::SlowDown
        };
        let n = speeds.len();
        SpeedProfile::new(self.t_now, speeds, vec![mode; n])
    }

    fn choose(&self, windows: &[GreenWindow]) -> Option<Approach> {
        let mut best: Option<Glide> = None;
        for w in windows {
            if self.cruise_fits(w) {
                return Some(Approach::Cruise);
            }
            if let Some(g) = self.best_glide(w) {
                best = match best {
                    Some(b) if !better(&g, &b, self.current_speed) => Some(b),
                    _ => Some(g),
                };
            }
        }
        best.map(Approach::Glide)
    }
}

/// Smaller deviation from `v0` wins; ties go to the lower cruise speed.
fn better(a: &Glide, b: &Glide, v0: f64) -> bool {
    let (da, db) = ((a.cruise_speed - v0).abs(), (b.cruise_speed - v0).abs());
    da < db || (da == db && a.cruise_speed < b.cruise_speed)
}

/// Mode the eco planner adopts for the context's green window.
pub fn select_mode(ctx: &PlannerContext) -> DrivingMode {
    if ctx.validate().is_err() {
        return DrivingMode::Stop;
    }
    match ctx.choose(std::slice::from_ref(&ctx.green_window)) {
        Some(Approach::Cruise) => DrivingMode::Cruise,
        Some(Approach::Glide(g)) if g.cruise_speed > ctx.current_speed => DrivingMode::SpeedUp,
        Some(Approach::Glide(_)) => DrivingMode::SlowDown,
        None => DrivingMode::Stop,
    }
}

/// Eco profile for the context's window. Ends at the first sample at or past
/// the stop bar, or at the end of the launch ramp in Stop mode.
pub fn plan_eco_profile(ctx: &PlannerContext) -> Result<SpeedProfile> {
    plan_eco_over_windows(ctx, std::slice::from_ref(&ctx.green_window))
}

/// Eco profile choosing among several candidate windows (consecutive cycles).
pub fn plan_eco_over_windows(ctx: &PlannerContext, windows: &[GreenWindow]) -> Result<SpeedProfile> {
    ctx.validate()?;
    match ctx.choose(windows) {
        Some(Approach::Cruise) => ctx.cruise_plan(),
        Some(Approach::Glide(g)) => ctx.glide_plan(&g),
        None => ctx.stop_plan(windows),
    }
}

/// Samples `speed(k)` at whole seconds until the travelled distance reaches
/// `dist` at or after `not_before` seconds.
fn sample_until(
    speed: impl Fn(f64) -> f64,
    dist: f64,
    not_before: f64,
) -> Result<Vec<f64>> {
    let mut speeds = vec![speed(0.0)];
    let mut x = 0.0;
    for k in 1..MAX_STEPS {
        let v = speed(k as f64);
        x += 0.5 * (speeds[k - 1] + v);
        speeds.push(v);
        if x >= dist && k as f64 >= not_before {
            return Ok(speeds);
        }
    }
    Err(Error::invalid(format!("vehicle never covers {dist:.1} m")))
}

fn trapezoid(speeds: impl Iterator<Item = f64>) -> f64 {
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    for v in speeds {
        if let Some(p) = prev {
            total += 0.5 * (p + v);
        }
        prev = Some(v);
    }
    total
}

/// Baseline driver: accelerate at `a_max` to the limit, brake at `a_min` to
/// stop at the bar if the light will be red on arrival, launch at `a_max`
/// on green. A green during braking resumes acceleration immediately.
pub fn plan_baseline_profile(ctx: &PlannerContext, signal: &SignalTiming) -> Result<SpeedProfile> {
    ctx.validate()?;
    let dist = ctx.distance();
    let (vlim, acc, dec, v0) = (ctx.speed_limit, ctx.a_max, -ctx.a_min, ctx.current_speed);
    let nominal = |t: f64| (v0 + acc * t).min(vlim);

    let free = sample_until(nominal, dist, 0.0)?;
    let free_profile = SpeedProfile::new(ctx.t_now, free.clone(), vec![DrivingMode::Cruise; free.len()])?;
    let arrival = free_profile.crossing_time(dist).expect("free run reaches the bar");
    let tag_free = |v: f64, prev: f64| if v > prev + TOL { DrivingMode::SpeedUp } else { DrivingMode::Cruise };

    let stopping_distance = |s: f64| {
        let v_s = nominal(s);
        let end = (s + v_s / dec).ceil() as usize + 1;
        trapezoid((0..=end).map(|k| {
            let t = k as f64;
            if t <= s {
                nominal(t)
            } else {
                (v_s - dec * (t - s)).max(0.0)
            }
        }))
    };

    // Aim a hair short of the bar so the stopped position never counts as crossed.
    let target = dist - 1e-6;
    if signal.is_green(arrival) || stopping_distance(0.0) > target {
        let modes = std::iter::once(DrivingMode::Cruise)
            .chain(free.windows(2).map(|w| tag_free(w[1], w[0])))
            .collect();
        return SpeedProfile::new(ctx.t_now, free, modes);
    }

    let (mut lo, mut hi) = (0.0, arrival - ctx.t_now);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if stopping_distance(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let s = lo;
    let v_s = nominal(s);
    let t_stop = s + v_s / dec;
    // Speed changes only at whole-second samples, so the response to green
    // waits for the first sample at or after the onset.
    let green = (signal.next_green_onset(arrival) - ctx.t_now - TOL).ceil();
    let braked = |t: f64| {
        if t <= s {
            nominal(t)
        } else {
            (v_s - dec * (t - s)).max(0.0)
        }
    };
    let v_green = if green < t_stop { braked(green) } else { 0.0 };
    let speed = |t: f64| {
        if t <= green {
            braked(t)
        } else {
            (v_green + acc * (t - green)).min(vlim)
        }
    };
    let speeds = sample_until(speed, dist, green)?;
    let mut modes = Vec::with_capacity(speeds.len());
    for (k, &v) in speeds.iter().enumerate() {
        let t = k as f64;
        let mode = if v <= 0.0 {
            DrivingMode::Stop
        } else if t <= s {
            if k == 0 { DrivingMode::Cruise } else { tag_free(v, speeds[k - 1]) }
        } else if t <= green {
            DrivingMode::SlowDown
        } else if v < vlim {
            DrivingMode::SpeedUp
        } else {
            DrivingMode::Cruise
        };
        modes.push(mode);
    }
    SpeedProfile::new(ctx.t_now, speeds, modes)
}

/// Unsignalized stretch that must end exactly `distance` metres ahead at a
/// whole-second sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeLeg {
    pub t_now: f64,
    pub current_speed: f64,
    pub distance: f64,
    pub speed_limit: f64,
    pub a_max: f64,
    pub a_min: f64,
}

fn free_leg_mode(vc: f64, v0: f64) -> DrivingMode {
    if vc > v0 + TOL {
        DrivingMode::SpeedUp
    } else if vc < v0 - TOL {
        DrivingMode::SlowDown
    } else {
        DrivingMode::Cruise
    }
}

/// Half-cosine ramp to a cruise speed chosen so the last sample lands on the
/// leg end.
pub fn plan_free_leg_eco(leg: &FreeLeg, tuning: &PlannerTuning) -> Result<SpeedProfile> {
    if leg.distance <= 0.0 {
        return Ok(SpeedProfile::point(leg.t_now, leg.current_speed, DrivingMode::Cruise));
    }
    let v0 = leg.current_speed;
    let first = (leg.distance / leg.speed_limit).floor().max(1.0) as usize;
    for steps in first..MAX_STEPS {
        let g = solve_glide(
            v0,
            leg.distance,
            steps as f64,
            (tuning.eco_accel, tuning.eco_decel),
            (leg.a_max, -leg.a_min),
        );
        if let Some(g) = g.filter(|g| g.cruise_speed <= leg.speed_limit + TOL) {
            let speeds = glide_speeds(v0, &g)?;
            let n = speeds.len();
            return SpeedProfile::new(leg.t_now, speeds, vec![free_leg_mode(g.cruise_speed, v0); n]);
        }
    }
    Err(Error::invalid(format!("no eco free leg over {:.1} m", leg.distance)))
}

/// Constant-rate change to a cruise speed chosen so the last sample lands on
/// the leg end.
pub fn plan_free_leg_baseline(leg: &FreeLeg) -> Result<SpeedProfile> {
    if leg.distance <= 0.0 {
        return Ok(SpeedProfile::point(leg.t_now, leg.current_speed, DrivingMode::Cruise));
    }
    let (v0, acc, dec) = (leg.current_speed, leg.a_max, -leg.a_min);
    let ramp = |vc: f64, k: usize| {
        let t = k as f64;
        if vc >= v0 {
            (v0 + acc * t).min(vc)
        } else {
            (v0 - dec * t).max(vc)
        }
    };
    let covered = |vc: f64, steps: usize| trapezoid((0..=steps).map(|k| ramp(vc, k)));
    let steps = (1..MAX_STEPS)
        .find(|&n| covered(leg.speed_limit, n) >= leg.distance)
        .ok_or_else(|| Error::invalid("free leg never ends"))?;
    if covered(0.0, steps) > leg.distance {
        return Err(Error::invalid(format!(
            "cannot end a free leg of {:.1} m from {v0:.2} m/s",
            leg.distance
        )));
    }
    let (mut lo, mut hi) = (0.0, leg.speed_limit);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if covered(mid, steps) < leg.distance {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let vc = 0.5 * (lo + hi);
    let speeds: Vec<f64> = (0..=steps).map(|k| ramp(vc, k)).collect();
    let modes = speeds
        .iter()
        .enumerate()
        .map(|(k, &v)| if k > 0 && (v - speeds[k - 1]).abs() > TOL { free_leg_mode(v, speeds[k - 1]) } else { DrivingMode::Cruise })
        .collect();
    SpeedProfile::new(leg.t_now, speeds, modes)
}
