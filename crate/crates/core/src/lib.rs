//! Eco-driving through signalized corridors for a power-split hybrid:
//! green-window prediction, trigonometric speed planning, dynamic
//! programming of the engine/battery split, and coolant, catalyst and
//! tailpipe-emission evaluation.

pub mod config;
pub mod corridor;
pub mod dp;
pub mod error;
pub mod harness;
pub mod planner;
pub mod powertrain;
pub mod profile;
pub mod table;
pub mod thermal;

pub use config::{ControllerKind, ModelConfig, PlannerKind, Scenario};
pub use corridor::{Corridor, GreenWindow, Intersection, QueueEstimate, QueueModel, SignalTiming, TrafficState};
pub use dp::{DpProblem, DpSolution, TerminalCost};
pub use error::{Error, Result};
pub use harness::{BatchResult, BatchSummary, CaseResult, CaseSummary, Combo};
pub use planner::{PlannerContext, PlannerTuning};
pub use powertrain::{ControlDecision, EngineMode, EngineOp, PowertrainState};
pub use profile::{DrivingMode, SpeedProfile};
pub use thermal::{EmissionRates, ThermalState};
