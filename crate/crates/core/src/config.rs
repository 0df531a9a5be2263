//! Schema-versioned TOML configuration: vehicle model, corridor and scenario.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corridor::Corridor;
use crate::dp::DpSettings;
use crate::error::{Error, Result};
use crate::planner::{ArrivalTarget, PlannerTuning};
use crate::powertrain::{BatteryParams, EngineParams, Powertrain, RuleBasedParams, SocModelParams, VehicleParams};
use crate::thermal::{CatalystCurves, EmissionMaps, ThermalParams};

pub const SCHEMA_VERSION: i64 = 1;

pub const BUNDLED_MODEL: &str = include_str!("../../../configs/hev_default.toml");
pub const BUNDLED_CORRIDOR: &str = include_str!("../../../configs/corridor_default.toml");
pub const BUNDLED_SCENARIO: &str = include_str!("../../../configs/scenario_default.toml");
const BUNDLED_MODEL_NAME: &str = "hev_default.toml";
const BUNDLED_CORRIDOR_NAME: &str = "corridor_default.toml";

/// Parses `text`, checks and strips `schema_version`, then deserializes the rest.
fn parse_versioned<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| Error::Config(format!("{what}: {e}")))?;
    match table.remove("schema_version") {
        Some(toml::Value::Integer(SCHEMA_VERSION)) => {}
        Some(v) => {
            return Err(Error::Config(format!(
                "{what}: unsupported schema_version {v} (expected {SCHEMA_VERSION})"
            )))
        }
        None => return Err(Error::Config(format!("{what}: missing schema_version"))),
    }
    T::deserialize(toml::Value::Table(table)).map_err(|e| Error::Config(format!("{what}: {e}")))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Kinematic bounds and eco-planner preferences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSettings {
    pub a_max: f64,
    pub a_min: f64,
    pub eco_accel: f64,
    pub eco_decel: f64,
    pub cruise_floor_fraction: f64,
    pub arrival_margin: f64,
}

impl PlannerSettings {
    pub fn tuning(&self) -> PlannerTuning {
        PlannerTuning {
            eco_accel: self.eco_accel,
            eco_decel: self.eco_decel,
            cruise_floor_fraction: self.cruise_floor_fraction,
            arrival_margin: self.arrival_margin,
            arrival_target: ArrivalTarget::LeastDeviation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.a_max > 0.0
            && self.a_min < 0.0
            && self.eco_accel > 0.0
            && self.eco_accel <= self.a_max
            && self.eco_decel > 0.0
            && self.eco_decel <= -self.a_min
            && (0.0..=1.0).contains(&self.cruise_floor_fraction)
            && self.arrival_margin >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid planner settings {self:?}")))
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    vehicle: VehicleParams,
    battery: BatteryParams,
    soc_model: SocModelParams,
    engine: EngineParams,
    emissions: EmissionMaps,
    catalyst_curves: CatalystCurves,
    thermal: ThermalParams,
    rule_based: RuleBasedParams,
    dp: DpSettings,
    planner: PlannerSettings,
}

/// Vehicle, powertrain, thermal and controller parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub powertrain: Powertrain,
    pub emissions: EmissionMaps,
    pub catalyst_curves: CatalystCurves,
    pub thermal: ThermalParams,
    pub rule_based: RuleBasedParams,
    pub dp: DpSettings,
    pub planner: PlannerSettings,
}

impl ModelConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let f: ModelFile = parse_versioned(text, "model config")?;
        let cfg = ModelConfig {
            powertrain: Powertrain {
                vehicle: f.vehicle,
                battery: f.battery,
                soc_model: f.soc_model,
                engine: f.engine,
            },
            emissions: f.emissions,
            catalyst_curves: f.catalyst_curves,
            thermal: f.thermal,
            rule_based: f.rule_based,
            dp: f.dp,
            planner: f.planner,
        };
        cfg.validate_static()?;
        Ok(cfg)
    }

    pub fn bundled() -> Result<Self> {
        Self::from_toml_str(BUNDLED_MODEL)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&read(path)?)
    }

    fn validate_static(&self) -> Result<()> {
        let pt = &self.powertrain;
        pt.vehicle.validate()?;
        pt.battery.validate()?;
        pt.soc_model.validate()?;
        pt.engine.validate()?;
        self.emissions.validate()?;
        self.catalyst_curves.validate()?;
        self.thermal.validate()?;
        self.rule_based.validate()?;
        self.dp.validate()?;
        self.planner.validate()
    }

    /// Full check including the SOC model's monotonicity at this auxiliary load.
    pub fn validate(&self, p_aux: f64) -> Result<()> {
        self.validate_static()?;
        self.powertrain.validate(p_aux)
    }
}

impl Corridor {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: Corridor = parse_versioned(text, "corridor")?;
        c.validate()?;
        Ok(c)
    }

    pub fn bundled() -> Result<Self> {
        Self::from_toml_str(BUNDLED_CORRIDOR)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&read(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    #[serde(rename = "rule")]
    RuleBased,
    Dp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Baseline,
    Eco,
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControllerKind::RuleBased => "rule",
            ControllerKind::Dp => "dp",
        })
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlannerKind::Baseline => "baseline",
            PlannerKind::Eco => "eco",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConditions {
    pub v0_kmh: f64,
    pub soc0: f64,
    /// degC
    pub t_cl0: f64,
    /// degC
    pub t_cat0: f64,
    /// Corridor entry time, s.
    #[serde(default)]
    pub entry_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    /// degC
    pub t_amb: f64,
    /// W
    pub p_aux: f64,
    pub ac_on: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSettings {
    pub n: usize,
    pub seed: u64,
    pub v0_min_kmh: f64,
    pub v0_max_kmh: f64,
    /// Seconds between consecutive vehicle entries.
    pub entry_headway: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    corridor: PathBuf,
    model: PathBuf,
    controller: ControllerKind,
    planner: PlannerKind,
    initial: InitialConditions,
    environment: Environment,
    batch: BatchSettings,
}

/// SHA-256 of the exact text each configuration was read from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigDigests {
    pub scenario: String,
    pub corridor: String,
    pub model: String,
}

/// A fully resolved simulation setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub corridor: Corridor,
    pub model: ModelConfig,
    pub controller: ControllerKind,
    pub planner: PlannerKind,
    pub initial: InitialConditions,
    pub environment: Environment,
    pub batch: BatchSettings,
    pub digests: ConfigDigests,
}

impl Scenario {
    fn assemble(
        file: ScenarioFile,
        scenario_text: &str,
        corridor_text: &str,
        model_text: &str,
    ) -> Result<Self> {
        let s = Scenario {
            corridor: Corridor::from_toml_str(corridor_text)?,
            model: ModelConfig::from_toml_str(model_text)?,
            controller: file.controller,
            planner: file.planner,
            initial: file.initial,
            environment: file.environment,
            batch: file.batch,
            digests: ConfigDigests {
                scenario: digest(scenario_text),
                corridor: digest(corridor_text),
                model: digest(model_text),
            },
        };
        s.validate()?;
        Ok(s)
    }

    /// The shipped default scenario, independent of the working directory.
    pub fn bundled() -> Result<Self> {
        let file: ScenarioFile = parse_versioned(BUNDLED_SCENARIO, "scenario")?;
        if file.corridor != Path::new(BUNDLED_CORRIDOR_NAME) || file.model != Path::new(BUNDLED_MODEL_NAME) {
            return Err(Error::Config("bundled scenario must reference the bundled files".into()));
        }
        Self::assemble(file, BUNDLED_SCENARIO, BUNDLED_CORRIDOR, BUNDLED_MODEL)
    }

    /// Loads a scenario; referenced files resolve relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read(path)?;
        let file: ScenarioFile = parse_versioned(&text, &format!("scenario {}", path.display()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let corridor = read(&dir.join(&file.corridor))?;
        let model = read(&dir.join(&file.model))?;
        Self::assemble(file, &text, &corridor, &model)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate(self.environment.p_aux)?;
        self.corridor.validate()?;
        let i = &self.initial;
        let soc = &self.model.powertrain.soc_model;
        let v0 = i.v0_kmh / 3.6;
        let b = &self.batch;
        let bad = |m: &str| Err(Error::Config(format!("scenario: {m}")));
        if !(v0 >= 0.0 && v0 <= self.corridor.speed_limit + 1e-9) {
            return bad("initial speed outside [0, speed limit]");
        }
        if !(i.soc0 >= soc.soc_min && i.soc0 <= soc.soc_max) {
            return bad("soc0 outside the SOC bounds");
        }
        if !(i.soc0 >= self.model.dp.soc_lo && i.soc0 <= self.model.dp.soc_hi) {
            return bad("soc0 outside the DP grid");
        }
        if !(i.t_cl0 >= self.environment.t_amb - 1.0 && i.t_cat0 >= self.environment.t_amb - 1.0) {
            return bad("initial temperatures below ambient");
        }
        if !(self.environment.p_aux >= 0.0) {
            return bad("negative auxiliary load");
        }
        if b.n == 0 || !(b.v0_min_kmh >= 0.0 && b.v0_min_kmh <= b.v0_max_kmh) || !(b.entry_headway >= 0.0) {
            return bad("batch settings out of range");
        }
        if b.v0_max_kmh / 3.6 > self.corridor.speed_limit + 1e-9 {
            return bad("batch speeds exceed the speed limit");
        }
        Ok(())
    }
}
