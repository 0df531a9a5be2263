//! Signalized-intersection queue prediction and green windows.
//!
//! Queues are modelled as a point queue per lane: vehicles join at the
//! arrival rate and leave at the saturation flow while the signal is green.
//! The queue tail position is derived from the jam spacing. Wave speeds
//! between two traffic states follow the kinematic-wave jump condition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SATURATION_FLOW: f64 = 1800.0;
pub const DEFAULT_JAM_DENSITY: f64 = 150.0;
pub const DEFAULT_MAX_WINDOW_CYCLES: usize = 4;

/// Fixed-time signal plan. Cycle `n` starts at `reference_time + n * cycle_length`
/// and is green on `[green_start, green_start + green_duration)` within the cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalTiming {
    pub cycle_length: f64,
    pub green_start: f64,
    pub green_duration: f64,
    pub reference_time: f64,
}

impl SignalTiming {
    pub fn new(
        cycle_length: f64,
        green_start: f64,
        green_duration: f64,
        reference_time: f64,
    ) -> Result<Self> {
        let s = Self {
            cycle_length,
            green_start,
            green_duration,
            reference_time,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.cycle_length > 0.0
            && self.green_duration > 0.0
            && self.green_duration < self.cycle_length
            && self.green_start >= 0.0
            && self.green_start + self.green_duration <= self.cycle_length
            && self.reference_time.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("inconsistent signal timing {self:?}")))
        }
    }

    /// Index of the cycle containing `t`.
    pub fn cycle_index(&self, t: f64) -> i64 {
        ((t - self.reference_time) / self.cycle_length).floor() as i64
    }

    pub fn cycle_start(&self, cycle: i64) -> f64 {
        self.reference_time + cycle as f64 * self.cycle_length
    }

    /// Absolute `[onset, end]` of the green phase of `cycle`.
    pub fn green_interval(&self, cycle: i64) -> (f64, f64) {
        let onset = self.cycle_start(cycle) + self.green_start;
        (onset, onset + self.green_duration)
    }

    pub fn is_green(&self, t: f64) -> bool {
        let (onset, end) = self.green_interval(self.cycle_index(t));
        t >= onset && t < end
    }

    /// Earliest green onset at or after `t`; `t` itself while green.
    pub fn next_green_onset(&self, t: f64) -> f64 {
        if self.is_green(t) {
            return t;
        }
        let cycle = self.cycle_index(t);
        let (onset, _) = self.green_interval(cycle);
        if onset >= t {
            onset
        } else {
            self.green_interval(cycle + 1).0
        }
    }

    /// True when `window` lies inside a single green phase.
    pub fn contains_window(&self, window: &GreenWindow) -> bool {
        let (onset, end) = self.green_interval(window.cycle_index);
        window.earliest_pass >= onset - 1e-9
            && window.latest_pass <= end + 1e-9
            && window.earliest_pass < window.latest_pass
    }
}

/// Flow/density pair on one side of a wave front.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficState {
    /// veh/h
    pub flow: f64,
    /// veh/km
    pub density: f64,
}

impl TrafficState {
    pub fn new(flow: f64, density: f64, jam_density: f64) -> Result<Self> {
        if !(flow >= 0.0 && density >= 0.0 && density <= jam_density) {
            return Err(Error::invalid(format!(
                "traffic state q={flow} k={density} outside [0, {jam_density}]"
            )));
        }
        Ok(Self { flow, density })
    }
}

/// Speed (km/h) of the wave separating `upstream` and `downstream`.
/// Negative values travel upstream.
pub fn shockwave_speed(upstream: TrafficState, downstream: TrafficState) -> Result<f64> {
    let dk = downstream.density - upstream.density;
    if dk == 0.0 {
        return Err(Error::EqualDensity(upstream.density));
    }
    Ok((downstream.flow - upstream.flow) / dk)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueEstimate {
    pub t: f64,
    /// Vehicles per lane, fractional.
    pub queue_length: f64,
    /// m upstream of the stop bar.
    pub queue_tail_position: f64,
    /// Time the current queue started forming; equals `t` when empty.
    pub formed_at: f64,
    pub cumulative_arrivals: f64,
    pub cumulative_departures: f64,
}

impl QueueEstimate {
    pub fn empty(t: f64) -> Self {
        Self {
            t,
            queue_length: 0.0,
            queue_tail_position: 0.0,
            formed_at: t,
            cumulative_arrivals: 0.0,
            cumulative_departures: 0.0,
        }
    }

    /// Point queue of `vehicles` at time `t`, spaced at jam density.
    pub fn with_length(t: f64, vehicles: f64, jam_density: f64) -> Self {
        Self {
            t,
            queue_length: vehicles,
            queue_tail_position: vehicles * 1000.0 / jam_density,
            formed_at: t,
            cumulative_arrivals: vehicles,
            cumulative_departures: 0.0,
        }
    }
}

/// Discharge characteristics of one approach lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueModel {
    /// veh/h/lane
    pub saturation_flow: f64,
    /// veh/km/lane
    pub jam_density: f64,
    /// s lost at each green onset before discharge starts.
    pub startup_lost_time: f64,
    /// Cycles searched before giving up on a window.
    pub max_cycles: usize,
}

impl QueueModel {
    /// No start-up lost time, default jam density and search depth.
    pub fn new(saturation_flow: f64) -> Self {
        Self {
            saturation_flow,
            jam_density: DEFAULT_JAM_DENSITY,
            startup_lost_time: 0.0,
            max_cycles: DEFAULT_MAX_WINDOW_CYCLES,
        }
    }

    pub fn with_lost_time(mut self, seconds: f64) -> Self {
        self.startup_lost_time = seconds;
        self
    }

    /// s per vehicle at saturation.
    pub fn headway(&self) -> f64 {
        3600.0 / self.saturation_flow
    }

    fn validate(&self) -> Result<()> {
        if !(self.saturation_flow > 0.0
            && self.jam_density > 0.0
            && self.startup_lost_time >= 0.0
            && self.max_cycles >= 1)
        {
            return Err(Error::invalid(format!("invalid queue model {self:?}")));
        }
        Ok(())
    }
}

/// Point-queue evolution at 1 Hz over `[t0, t0 + horizon]`.
///
/// `arrivals[k]` is the arrival rate (veh/h) held over `[t0 + k, t0 + k + 1)`.
/// The returned trace has `horizon + 1` samples starting from an empty queue.
pub fn evolve_queue(
    signal: &SignalTiming,
    arrivals: &[f64],
    saturation_flow: f64,
    t0: f64,
    horizon: usize,
) -> Result<Vec<QueueEstimate>> {
    evolve_queue_with(signal, arrivals, &QueueModel::new(saturation_flow), t0, horizon)
}

pub fn evolve_queue_with(
    signal: &SignalTiming,
    arrivals: &[f64],
    model: &QueueModel,
    t0: f64,
    horizon: usize,
) -> Result<Vec<QueueEstimate>> {
    model.validate()?;
    signal.validate()?;
    if horizon == 0 {
        return Err(Error::invalid("queue horizon must be positive"));
    }
    if arrivals.len() < horizon {
        return Err(Error::invalid(format!(
            "arrival trace covers {} s, horizon is {horizon} s",
            arrivals.len()
        )));
    }
    if arrivals.iter().any(|a| !(*a >= 0.0)) {
        return Err(Error::invalid("arrival rates must be non-negative"));
    }

    let capacity = model.saturation_flow / 3600.0;
    let spacing = 1000.0 / model.jam_density;
    let mut trace = Vec::with_capacity(horizon + 1);
    let mut current = QueueEstimate::empty(t0);
    trace.push(current);

    for (k, rate) in arrivals.iter().take(horizon).enumerate() {
        let t_start = t0 + k as f64;
        let inflow = rate / 3600.0;
        let arrived = current.cumulative_arrivals + inflow;
        let waiting = arrived - current.cumulative_departures;
        // Signal state is sampled mid-step so that boundaries on whole
        // seconds belong to the step that follows them.
        let departed = if signal.is_green(t_start + 0.5) {
            if waiting <= capacity {
                arrived
            } else {
                current.cumulative_departures + capacity
            }
        } else {
            current.cumulative_departures
        };
        let queue = (arrived - departed).max(0.0);
        let t = t_start + 1.0;
        let formed_at = if queue == 0.0 {
            t
        } else if current.queue_length == 0.0 {
            t_start
        } else {
            current.formed_at
        };
        current = QueueEstimate {
            t,
            queue_length: queue,
            queue_tail_position: queue * spacing,
            formed_at,
            cumulative_arrivals: arrived,
            cumulative_departures: departed,
        };
        trace.push(current);
    }
    Ok(trace)
}

/// Interval during which a vehicle can cross the stop bar on green.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenWindow {
    pub earliest_pass: f64,
    pub latest_pass: f64,
    pub cycle_index: i64,
}

impl GreenWindow {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.earliest_pass && t <= self.latest_pass
    }

    pub fn width(&self) -> f64 {
        self.latest_pass - self.earliest_pass
    }
}

/// Window opened by `signal` in `approach_cycle_index` once `queue` has
/// discharged. Discharge that outlasts a green rolls into later cycles.
pub fn predict_green_window(
    signal: &SignalTiming,
    queue: &QueueEstimate,
    model: &QueueModel,
    approach_cycle_index: i64,
) -> Result<GreenWindow> {
    model.validate()?;
    signal.validate()?;
    let mut remaining = model.startup_lost_time + queue.queue_length * model.headway();
    for c in 0..model.max_cycles as i64 {
        let cycle = approach_cycle_index + c;
        let (onset, end) = signal.green_interval(cycle);
        let earliest = onset + remaining.max(0.0);
        if earliest < end {
            return Ok(GreenWindow {
                earliest_pass: earliest,
                latest_pass: end,
                cycle_index: cycle,
            });
        }
        remaining = remaining - signal.green_duration + model.startup_lost_time;
    }
    Err(Error::NoWindowInHorizon {
        start_cycle: approach_cycle_index,
        cycles: model.max_cycles,
    })
}

/// One signalized stop bar of a corridor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    /// Stop-bar distance from corridor entry, m.
    pub position: f64,
    pub cycle_length: f64,
    pub green_start: f64,
    pub green_duration: f64,
    /// Start of cycle 0, s.
    pub offset: f64,
    pub lanes: u32,
    /// veh/h/lane
    pub saturation_flow: f64,
    /// Background arrivals on the whole approach, veh/h.
    pub arrival_rate: f64,
}

impl Intersection {
    pub fn signal(&self) -> SignalTiming {
        SignalTiming {
            cycle_length: self.cycle_length,
            green_start: self.green_start,
            green_duration: self.green_duration,
            reference_time: self.offset,
        }
    }

    pub fn lane_arrival_rate(&self) -> f64 {
        self.arrival_rate / self.lanes as f64
    }

    /// Lane queue present at the green onset of `cycle`, evolved over the
    /// preceding cycle from an empty queue at the previous green onset.
    pub fn queue_at_green_onset(&self, cycle: i64, model: &QueueModel) -> Result<QueueEstimate> {
        let signal = self.signal();
        let (prev_onset, _) = signal.green_interval(cycle - 1);
        let horizon = signal.cycle_length.round().max(1.0) as usize;
        let arrivals = vec![self.lane_arrival_rate(); horizon];
        let trace = evolve_queue_with(&signal, &arrivals, model, prev_onset, horizon)?;
        Ok(*trace.last().expect("non-empty trace"))
    }

    /// Predicted windows for consecutive cycles, starting with the cycle in
    /// progress at `from`. Windows already closed at `from` are skipped.
    pub fn green_windows(
        &self,
        from: f64,
        count: usize,
        model: &QueueModel,
    ) -> Result<Vec<GreenWindow>> {
        let signal = self.signal();
        let first = signal.cycle_index(from);
        let mut out = Vec::with_capacity(count);
        let mut cycle = first;
        while out.len() < count && cycle < first + count as i64 + model.max_cycles as i64 {
            let queue = self.queue_at_green_onset(cycle, model)?;
            match predict_green_window(&signal, &queue, model, cycle) {
                Ok(w) if w.latest_pass > from => {
                    // A rolled-over discharge can land in a cycle already emitted.
                    if out.last().is_none_or(|p: &GreenWindow| p.cycle_index < w.cycle_index) {
                        out.push(w);
                    }
                }
                Ok(_) => {}
                Err(Error::NoWindowInHorizon { .. }) => {}
                Err(e) => return Err(e),
            }
            cycle += 1;
        }
        Ok(out)
    }
}

/// Arterial description consumed by the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    pub length: f64,
    pub speed_limit: f64,
    #[serde(default = "default_jam_density")]
    pub jam_density: f64,
    #[serde(default)]
    pub startup_lost_time: f64,
    #[serde(default = "default_max_cycles")]
    pub max_window_cycles: usize,
    #[serde(default, rename = "intersection")]
    pub intersections: Vec<Intersection>,
}

fn default_jam_density() -> f64 {
    DEFAULT_JAM_DENSITY
}

fn default_max_cycles() -> usize {
    DEFAULT_MAX_WINDOW_CYCLES
}

impl Corridor {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("corridor: {m}")));
        if !(self.length >= 0.0) {
            return bad(format!("length {} must be non-negative", self.length));
        }
        if !(self.speed_limit > 0.0) {
            return bad("speed_limit must be positive".into());
        }
        if !(self.jam_density > 0.0) || !(self.startup_lost_time >= 0.0) || self.max_window_cycles == 0 {
            return bad("jam_density, startup_lost_time or max_window_cycles out of range".into());
        }
        let mut last = 0.0;
        for (i, x) in self.intersections.iter().enumerate() {
            if !(x.position > last) {
                return bad(format!("intersection {i}: positions must increase from 0"));
            }
            if !(x.position < self.length) {
                return bad(format!("intersection {i}: beyond corridor end"));
            }
            if x.lanes == 0 || !(x.saturation_flow > 0.0) || !(x.arrival_rate >= 0.0) {
                return bad(format!("intersection {i}: lanes, saturation or arrivals invalid"));
            }
            if x.lane_arrival_rate() >= x.saturation_flow {
                return bad(format!("intersection {i}: oversaturated approach"));
            }
            x.signal()
                .validate()
                .map_err(|e| Error::Config(format!("corridor: intersection {i}: {e}")))?;
            last = x.position;
        }
        Ok(())
    }

    pub fn queue_model(&self, intersection: &Intersection) -> QueueModel {
        QueueModel {
            saturation_flow: intersection.saturation_flow,
            jam_density: self.jam_density,
            startup_lost_time: self.startup_lost_time,
            max_cycles: self.max_window_cycles,
        }
    }
}
