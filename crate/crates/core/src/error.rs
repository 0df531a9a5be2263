use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two traffic states with the same density do not bound a shockwave.
    #[error("shockwave speed undefined: both states have density {0} veh/km")]
    EqualDensity(f64),

    #[error("no green window within {cycles} cycles of cycle {start_cycle}")]
    NoWindowInHorizon { start_cycle: i64, cycles: usize },

    #[error("operating point outside envelope: {0}")]
    OutOfEnvelope(String),

    #[error("power demand of {demand:.0} W exceeds combined engine and battery capability")]
    InfeasibleDemand { demand: f64 },

    #[error("no feasible control at step {step} (soc {soc:.4})")]
    NoFeasiblePolicy { step: usize, soc: f64 },

    #[error("baseline emission is zero; improvement undefined")]
    ZeroBaseline,

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("case failed at step {step} (t = {t:.0} s): {source}; state: {snapshot}")]
    CaseFailed {
        step: usize,
        t: f64,
        snapshot: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad configuration or scenario files.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
