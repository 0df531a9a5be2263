//! 1 Hz speed traces shared by the planner, the powertrain and the harness.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrivingMode {
    SlowDown,
    SpeedUp,
    Cruise,
    Stop,
}

impl DrivingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DrivingMode::SlowDown => "slow_down",
            DrivingMode::SpeedUp => "speed_up",
            DrivingMode::Cruise => "cruise",
            DrivingMode::Stop => "stop",
        }
    }
}

impl fmt::Display for DrivingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Speeds sampled every `dt` seconds from `t0`, each tagged with the
/// planning mode that produced it. Positions follow from trapezoidal
/// integration, i.e. speed is taken as linear between samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    pub t0: f64,
    pub dt: f64,
    pub speeds: Vec<f64>,
    pub modes: Vec<DrivingMode>,
}

impl SpeedProfile {
    pub fn new(t0: f64, speeds: Vec<f64>, modes: Vec<DrivingMode>) -> Result<Self> {
        if speeds.is_empty() || speeds.len() != modes.len() {
            return Err(Error::invalid(format!(
                "profile needs matching non-empty speeds ({}) and modes ({})",
                speeds.len(),
                modes.len()
            )));
        }
        Ok(Self {
            t0,
            dt: 1.0,
            speeds,
            modes,
        })
    }

    /// A single sample at rest or in motion.
    pub fn point(t0: f64, speed: f64, mode: DrivingMode) -> Self {
        Self {
            t0,
            dt: 1.0,
            speeds: vec![speed],
            modes: vec![mode],
        }
    }

    pub fn len(&self) -> usize {
        self.speeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speeds.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn last_speed(&self) -> f64 {
        self.speeds[self.len() - 1]
    }

    /// Cumulative distance at each sample, starting at zero.
    pub fn positions(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        let mut x = 0.0;
        out.push(x);
        for w in self.speeds.windows(2) {
            x += 0.5 * (w[0] + w[1]) * self.dt;
            out.push(x);
        }
        out
    }

    pub fn distance(&self) -> f64 {
        self.speeds
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]) * self.dt)
            .sum()
    }

    /// First time the travelled distance reaches `d`, or `None` if it never does.
    pub fn crossing_time(&self, d: f64) -> Option<f64> {
        if d <= 0.0 {
            return Some(self.t0);
        }
        let pos = self.positions();
        let k = pos.iter().position(|&x| x >= d)?;
        let (va, vb) = (self.speeds[k - 1], self.speeds[k]);
        let rest = d - pos[k - 1];
        let accel = (vb - va) / self.dt;
        // Root of va*tau + accel*tau^2/2 = rest in the stable form.
        let disc = (va * va + 2.0 * accel * rest).max(0.0);
        let tau = if va + disc.sqrt() > 0.0 {
            2.0 * rest / (va + disc.sqrt())
        } else {
            self.dt
        };
        Some(self.time(k - 1) + tau.min(self.dt))
    }

    /// Appends `next`, which must start where `self` ends.
    pub fn extend(&mut self, next: &SpeedProfile) -> Result<()> {
        if (next.t0 - self.end_time()).abs() > 1e-9 || (next.speeds[0] - self.last_speed()).abs() > 1e-9
        {
            return Err(Error::invalid(format!(
                "profile splice mismatch: ends at t={} v={}, next starts at t={} v={}",
                self.end_time(),
                self.last_speed(),
                next.t0,
                next.speeds[0]
            )));
        }
        self.speeds.extend_from_slice(&next.speeds[1..]);
        self.modes.extend_from_slice(&next.modes[1..]);
        Ok(())
    }

    /// Non-negative speeds below `speed_limit` and step accelerations within
    /// `[a_min, a_max]`.
    pub fn check_kinematics(&self, speed_limit: f64, a_max: f64, a_min: f64) -> Result<()> {
        const TOL: f64 = 1e-9;
        for (k, &v) in self.speeds.iter().enumerate() {
            if !(v >= -TOL && v <= speed_limit + TOL) {
                return Err(Error::invalid(format!("speed {v} at sample {k} outside [0, {speed_limit}]")));
            }
        }
        for (k, w) in self.speeds.windows(2).enumerate() {
            let a = (w[1] - w[0]) / self.dt;
            if a > a_max + TOL || a < a_min - TOL {
                return Err(Error::invalid(format!(
                    "acceleration {a} at step {k} outside [{a_min}, {a_max}]"
                )));
            }
        }
        Ok(())
    }

    /// `t,v,mode` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let map = |e: csv::Error| Error::invalid(format!("csv: {e}"));
        w.write_record(["t", "v", "mode"]).map_err(map)?;
        for (k, (v, m)) in self.speeds.iter().zip(&self.modes).enumerate() {
            w.write_record([self.time(k).to_string(), v.to_string(), m.as_str().to_string()])
                .map_err(map)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}
