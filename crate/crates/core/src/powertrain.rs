//! Road load, battery SOC dynamics, engine fuel use and the rule-based
//! power split.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::SpeedProfile;
use crate::table::{Grid2d, Table1d};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// Cd*A, m^2
    pub drag_area: f64,
    pub rolling_coeff: f64,
    /// kg/m^3
    pub air_density: f64,
    pub driveline_efficiency: f64,
    pub regen_efficiency: f64,
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.mass, self.drag_area, self.rolling_coeff, self.air_density];
        if positive.iter().any(|&x| !(x > 0.0 && x.is_finite()))
            || !(self.driveline_efficiency > 0.0 && self.driveline_efficiency <= 1.0)
            || !(0.0..=1.0).contains(&self.regen_efficiency)
        {
            return Err(Error::Config(format!("invalid vehicle parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryParams {
    pub capacity_kwh: f64,
    /// Charge limit, W (negative).
    pub p_bat_min: f64,
    /// Discharge limit, W.
    pub p_bat_max: f64,
}

impl BatteryParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.capacity_kwh > 0.0 && self.p_bat_min < 0.0 && self.p_bat_max > 0.0) {
            return Err(Error::Config(format!("invalid battery parameters {self:?}")));
        }
        Ok(())
    }

    pub fn contains(&self, p_bat: f64) -> bool {
        p_bat >= self.p_bat_min && p_bat <= self.p_bat_max
    }
}

/// Wheel power demand per sample, W.
///
/// Step `k` covers `[k, k+1]`: the acceleration is the forward difference and
/// the speed is the step mean, so the demand integrates to the change in
/// kinetic energy plus road load. The last sample holds its speed. Braking
/// power is scaled by the regeneration efficiency and floored at the charge
/// limit.
pub fn traction_power(profile: &SpeedProfile, vehicle: &VehicleParams, charge_limit: f64) -> Vec<f64> {
    let v = &profile.speeds;
    let n = v.len();
    (0..n)
        .map(|k| {
            let (v0, v1) = if k + 1 < n { (v[k], v[k + 1]) } else { (v[k], v[k]) };
            wheel_to_traction(wheel_power(v0, v1, profile.dt, vehicle), vehicle, charge_limit)
        })
        .collect()
}

/// Power at the wheels over a step from `v0` to `v1`.
pub fn wheel_power(v0: f64, v1: f64, dt: f64, p: &VehicleParams) -> f64 {
    let a = (v1 - v0) / dt;
    let v = 0.5 * (v0 + v1);
    if v <= 0.0 {
        return 0.0;
    }
    let force = p.mass * a + p.mass * GRAVITY * p.rolling_coeff + 0.5 * p.air_density * p.drag_area * v * v;
    force * v
}

fn wheel_to_traction(wheel: f64, p: &VehicleParams, charge_limit: f64) -> f64 {
    if wheel >= 0.0 {
        wheel / p.driveline_efficiency
    } else {
        (wheel * p.regen_efficiency).max(charge_limit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SocModelParams {
    pub xi: [f64; 9],
    pub soc_min: f64,
    pub soc_max: f64,
}

impl SocModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return Err(Error::Config(format!(
                "soc bounds [{}, {}] invalid",
                self.soc_min, self.soc_max
            )));
        }
        if self.xi.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("non-finite soc coefficient".into()));
        }
        Ok(())
    }

    /// SOC increment for one 1 s step.
    pub fn delta(&self, p_mg: f64, p_aux: f64, ac_on: bool) -> f64 {
        let x = &self.xi;
        if ac_on {
            x[0] * p_mg + x[1] * p_mg * p_mg + x[2] * p_mg * p_aux + x[3] * p_aux + x[4] * p_aux * p_aux + x[5]
        } else {
            x[6] * p_mg + x[7] * p_mg * p_mg + x[8]
        }
    }

    /// Slope of the increment with respect to `p_mg`.
    pub fn slope(&self, p_mg: f64, p_aux: f64, ac_on: bool) -> f64 {
        let x = &self.xi;
        if ac_on {
            x[0] + 2.0 * x[1] * p_mg + x[2] * p_aux
        } else {
            x[6] + 2.0 * x[7] * p_mg
        }
    }

    /// Both branches must discharge faster as `p_mg` grows over
    /// `[p_lo, p_hi]`. The slope is affine in `p_mg`, so the end points suffice.
    pub fn check_monotone(&self, p_lo: f64, p_hi: f64, p_aux: f64) -> Result<()> {
        for ac_on in [true, false] {
            for p in [p_lo, p_hi] {
                let s = self.slope(p, p_aux, ac_on);
                if !(s < 0.0) {
                    return Err(Error::Config(format!(
                        "soc model not discharge-monotone at p_mg = {p} W (ac_on = {ac_on}, slope {s:e})"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowertrainState {
    pub soc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocStep {
    pub state: PowertrainState,
    /// The raw update left `[soc_min, soc_max]` and was clamped.
    pub saturated: bool,
}

pub fn soc_step(state: PowertrainState, p_mg: f64, p_aux: f64, ac_on: bool, params: &SocModelParams) -> SocStep {
    let raw = state.soc + params.delta(p_mg, p_aux, ac_on);
    let soc = raw.clamp(params.soc_min, params.soc_max);
    SocStep {
        state: PowertrainState { soc },
        saturated: soc != raw,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EngineMode {
    EngineOff,
    EngineOn,
}

impl EngineMode {
    /// 1 = off, 2 = on.
    pub fn code(self) -> u8 {
        match self {
            EngineMode::EngineOff => 1,
            EngineMode::EngineOn => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlDecision {
    pub e_mode: EngineMode,
    /// W, positive = discharge.
    pub p_bat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineOp {
    /// rad/s
    pub omega: f64,
    /// W
    pub p_eng: f64,
    /// g/s
    pub fuel_rate: f64,
}

impl EngineOp {
    pub const OFF: EngineOp = EngineOp {
        omega: 0.0,
        p_eng: 0.0,
        fuel_rate: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OolTable {
    /// W
    pub power: Vec<f64>,
    /// rad/s
    pub omega: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineParams {
    /// W
    pub p_max: f64,
    pub ool: OolTable,
    /// g/s over (omega, power).
    pub fuel_map: Grid2d,
}

impl EngineParams {
    pub fn validate(&self) -> Result<()> {
        let ool = self.ool_table();
        ool.validate("engine.ool")?;
        if ool.y.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("engine.ool: omega must be nondecreasing".into()));
        }
        if !(self.p_max > 0.0) || ool.x_min() > 0.0 || ool.x_max() < self.p_max {
            return Err(Error::Config(format!(
                "engine.ool must span (0, p_max = {}] W",
                self.p_max
            )));
        }
        self.fuel_map.validate("engine.fuel_map")?;
        if self.fuel_map.values.iter().flatten().any(|&f| f < 0.0) {
            return Err(Error::Config("engine.fuel_map: negative fuel rate".into()));
        }
        for (&p, &w) in ool.x.iter().zip(&ool.y) {
            let p = p.min(self.p_max);
            if p > 0.0 && !self.fuel_map.contains(w, p) {
                return Err(Error::Config(format!("engine.fuel_map does not cover OOL point ({w}, {p})")));
            }
        }
        Ok(())
    }

    fn ool_table(&self) -> Table1d {
        Table1d {
            x: self.ool.power.clone(),
            y: self.ool.omega.clone(),
        }
    }

    /// Engine speed along the optimal operating line.
    pub fn optimal_operating_line(&self, p_eng: f64) -> Result<f64> {
        if !(p_eng > 0.0 && p_eng <= self.p_max) {
            return Err(Error::OutOfEnvelope(format!(
                "engine power {p_eng} W outside (0, {}]",
                self.p_max
            )));
        }
        self.ool_table()
            .eval(p_eng)
            .ok_or_else(|| Error::OutOfEnvelope(format!("engine power {p_eng} W outside OOL table")))
    }

    /// Fuel mass flow, g/s. `(0, 0)` is the engine-off point.
    pub fn fuel_rate(&self, omega: f64, p_eng: f64) -> Result<f64> {
        if p_eng == 0.0 && omega == 0.0 {
            return Ok(0.0);
        }
        if p_eng <= 0.0 || omega <= 0.0 {
            return Err(Error::invalid(format!(
                "engine at ({omega} rad/s, {p_eng} W): power and speed must both be zero or both positive"
            )));
        }
        self.fuel_map
            .eval(omega, p_eng)
            .map(|f| f.max(0.0))
            .ok_or_else(|| Error::OutOfEnvelope(format!("({omega} rad/s, {p_eng} W) outside fuel map")))
    }

    /// Operating point on the OOL delivering `p_eng`.
    pub fn operating_point(&self, p_eng: f64) -> Result<EngineOp> {
        let omega = self.optimal_operating_line(p_eng)?;
        Ok(EngineOp {
            omega,
            p_eng,
            fuel_rate: self.fuel_rate(omega, p_eng)?,
        })
    }
}

/// Thresholds of the rule-based controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleBasedParams {
    /// Traction power above which the engine runs, W.
    pub p_on_threshold: f64,
    /// Speed above which the engine runs, m/s.
    pub v_ev_max: f64,
    /// SOC below which the engine runs regardless of demand.
    pub soc_low: f64,
    /// SOC the charging bias steers toward.
    pub soc_target: f64,
    /// W of extra engine power per unit SOC deficit.
    pub bias_gain: f64,
    /// W
    pub bias_max: f64,
    /// Smallest engine power while running, W.
    pub p_eng_min: f64,
}

impl RuleBasedParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.p_on_threshold >= 0.0
            && self.v_ev_max >= 0.0
            && (0.0..=1.0).contains(&self.soc_low)
            && (0.0..=1.0).contains(&self.soc_target)
            && self.bias_gain >= 0.0
            && self.bias_max >= 0.0
            && self.p_eng_min > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid rule-based parameters {self:?}")))
        }
    }
}

/// Everything the power split needs about the vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Powertrain {
    pub vehicle: VehicleParams,
    pub battery: BatteryParams,
    pub soc_model: SocModelParams,
    pub engine: EngineParams,
}

impl Powertrain {
    pub fn validate(&self, p_aux: f64) -> Result<()> {
        self.vehicle.validate()?;
        self.battery.validate()?;
        self.soc_model.validate()?;
        self.engine.validate()?;
        self.soc_model
            .check_monotone(self.battery.p_bat_min - p_aux, self.battery.p_bat_max - p_aux, p_aux)
    }
}

/// Rule-based split. The engine stays off at standstill and while braking,
/// runs above the power or speed threshold or when SOC is low, and then
/// covers demand plus a charging bias when SOC is below target.
pub fn rule_based_split(
    p_trac: f64,
    p_aux: f64,
    v: f64,
    state: PowertrainState,
    rules: &RuleBasedParams,
    pt: &Powertrain,
) -> Result<(ControlDecision, EngineOp)> {
    let demand = p_trac + p_aux;
    let bat = &pt.battery;
    let off = (
        ControlDecision {
            e_mode: EngineMode::EngineOff,
            p_bat: demand,
        },
        EngineOp::OFF,
    );
    if v <= 0.0 || p_trac <= 0.0 {
        if bat.contains(demand) {
            return Ok(off);
        }
    } else {
        let wants_engine = p_trac > rules.p_on_threshold
            || (v > rules.v_ev_max && state.soc < rules.soc_target)
            || state.soc < rules.soc_low;
        if !wants_engine && bat.contains(demand) {
            return Ok(off);
        }
    }
    let bias = (rules.bias_gain * (rules.soc_target - state.soc)).clamp(0.0, rules.bias_max);
    let mut p_eng = (demand + bias).clamp(rules.p_eng_min, pt.engine.p_max);
    // Keep the battery inside its envelope by moving the engine.
    if demand - p_eng < bat.p_bat_min {
        p_eng = demand - bat.p_bat_min;
    }
    if demand - p_eng > bat.p_bat_max || p_eng <= 0.0 || p_eng > pt.engine.p_max {
        if bat.contains(demand) {
            return Ok(off);
        }
        return Err(Error::InfeasibleDemand { demand });
    }
    let op = pt.engine.operating_point(p_eng)?;
    Ok((
        ControlDecision {
            e_mode: EngineMode::EngineOn,
            p_bat: demand - p_eng,
        },
        op,
    ))
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;
    use crate::config::ModelConfig;
    use crate::profile::DrivingMode;

    fn model() -> ModelConfig {
        ModelConfig::bundled().unwrap()
    }

    fn profile(speeds: Vec<f64>) -> SpeedProfile {
        let n = speeds.len();
        SpeedProfile::new(0.0, speeds, vec![DrivingMode::Cruise; n]).unwrap()
    }

    #[test]
    fn standstill_needs_no_power() {
        let m = model();
        let p = traction_power(&profile(vec![0.0; 5]), &m.powertrain.vehicle, -25000.0);
        assert!(p.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn steady_road_load_by_hand() {
        let m = model();
        let p = traction_power(&profile(vec![15.0; 4]), &m.powertrain.vehicle, -25000.0);
        // rolling 1530*9.81*0.009 = 135.0837 N, aero 0.5*1.2*0.58*225 = 78.3 N
        let hand = (135.0837 + 78.3) * 15.0 / 0.95;
        for x in p {
            assert_relative_eq!(x, hand, max_relative = 1e-12);
        }
    }

    #[test]
    fn hard_braking_is_regen_scaled_and_charge_limited() {
        let m = model();
        let veh = m.powertrain.vehicle;
        // 15 -> 12 m/s: wheel power = (1530*(-3) + 135.0837 + 0.5*1.2*0.58*13.5^2) * 13.5
        let wheel = (1530.0 * -3.0 + 135.0837 + 0.5 * 1.2 * 0.58 * 13.5 * 13.5) * 13.5;
        let p = traction_power(&profile(vec![15.0, 12.0]), &veh, -100_000.0);
        assert_relative_eq!(p[0], wheel * 0.70, max_relative = 1e-12);
        let p = traction_power(&profile(vec![15.0, 12.0]), &veh, -25000.0);
        assert!(wheel * 0.70 < -25000.0);
        assert_eq!(p[0], -25000.0);
    }

    #[test]
    fn zero_coefficients_leave_soc_unchanged() {
        let params = SocModelParams {
            xi: [0.0; 9],
            soc_min: 0.4,
            soc_max: 0.8,
        };
        let s = soc_step(PowertrainState { soc: 0.6 }, 12000.0, 1700.0, true, &params);
        assert_eq!(s.state.soc, 0.6);
        assert!(!s.saturated);
    }

    #[test]
    fn default_calibration_by_hand() {
        let m = model();
        let s = soc_step(PowertrainState { soc: 0.6 }, 5000.0, 1700.0, true, &m.powertrain.soc_model);
        let pb: f64 = 6700.0;
        let hand = -(pb + 5e-6 * pb * pb) / (1.3 * 3.6e6);
        assert_relative_eq!(s.state.soc - 0.6, hand, max_relative = 1e-9);
    }

    #[test]
    fn clamping_sets_saturation_flag() {
        let m = model();
        let s = soc_step(PowertrainState { soc: 0.4 }, 25000.0, 1700.0, true, &m.powertrain.soc_model);
        assert!(s.saturated);
        assert_eq!(s.state.soc, 0.4);
    }

    #[test]
    fn ool_knots_midpoints_and_envelope() {
        let e = model().powertrain.engine;
        assert_eq!(e.optimal_operating_line(20000.0).unwrap(), 150.0);
        assert_eq!(e.optimal_operating_line(25000.0).unwrap(), 175.0);
        assert!(matches!(e.optimal_operating_line(e.p_max + 1.0), Err(Error::OutOfEnvelope(_))));
    }

    #[test]
    fn fuel_map_identities() {
        let e = model().powertrain.engine;
        assert_eq!(e.fuel_rate(0.0, 0.0).unwrap(), 0.0);
        let g = &e.fuel_map;
        assert_eq!(e.fuel_rate(g.omega[3], g.power[4]).unwrap(), g.values[3][4]);
        let mid = 0.25 * (g.values[3][4] + g.values[4][4] + g.values[3][5] + g.values[4][5]);
        let w = 0.5 * (g.omega[3] + g.omega[4]);
        let p = 0.5 * (g.power[4] + g.power[5]);
        assert_relative_eq!(e.fuel_rate(w, p).unwrap(), mid, max_relative = 1e-12);
        assert!(matches!(e.fuel_rate(1000.0, 1000.0), Err(Error::OutOfEnvelope(_))));
        assert!(e.fuel_rate(0.0, 1000.0).is_err());
    }

    #[test]
    fn rule_based_stops_on_battery() {
        let m = model();
        for soc in [0.41, 0.6, 0.79] {
            let (d, op) =
                rule_based_split(0.0, 1700.0, 0.0, PowertrainState { soc }, &m.rule_based, &m.powertrain).unwrap();
            assert_eq!(d.e_mode, EngineMode::EngineOff);
            assert_eq!(d.p_bat, 1700.0);
            assert_eq!(op, EngineOp::OFF);
        }
    }

    #[test]
    fn rule_based_high_demand_runs_engine() {
        let m = model();
        let (d, op) =
            rule_based_split(20000.0, 1700.0, 8.0, PowertrainState { soc: 0.6 }, &m.rule_based, &m.powertrain)
                .unwrap();
        assert_eq!(d.e_mode, EngineMode::EngineOn);
        assert!(op.p_eng > 0.0 && op.fuel_rate > 0.0);
        assert_relative_eq!(d.p_bat, 20000.0 + 1700.0 - op.p_eng, epsilon = 1e-9);
    }

    #[test]
    fn rule_based_low_soc_recharges() {
        let m = model();
        let r = m.rule_based;
        let (d, op) =
            rule_based_split(4000.0, 1700.0, 8.0, PowertrainState { soc: 0.40 }, &r, &m.powertrain).unwrap();
        // Hand rule: bias = min(gain * (target - soc), bias_max) on top of demand.
        let bias = (r.bias_gain * (r.soc_target - 0.40)).min(r.bias_max);
        assert_relative_eq!(op.p_eng, 5700.0 + bias, epsilon = 1e-9);
        assert!(d.p_bat < 0.0);
    }

    #[test]
    fn shipped_calibration_is_discharge_monotone() {
        let m = model();
        let b = m.powertrain.battery;
        m.powertrain.soc_model.check_monotone(b.p_bat_min - 1700.0, b.p_bat_max - 1700.0, 1700.0).unwrap();
    }

    proptest! {
        #[test]
        fn ac_off_ignores_aux(p in -25000.0..25000.0f64, aux in 0.0..99999.0f64) {
            let m = model();
            let s = PowertrainState { soc: 0.6 };
            let a = soc_step(s, p, 0.0, false, &m.powertrain.soc_model);
            let b = soc_step(s, p, aux, false, &m.powertrain.soc_model);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn soc_nonincreasing_in_p_mg(p in -26000.0..23000.0f64, dp in 0.0..500.0f64) {
            let m = model();
            let sm = m.powertrain.soc_model;
            prop_assert!(sm.delta(p + dp, 1700.0, true) <= sm.delta(p, 1700.0, true));
        }

        #[test]
        fn reversed_constant_profile_same_power(v in 0.0..20.0f64, n in 2usize..30) {
            let m = model();
            let a = traction_power(&profile(vec![v; n]), &m.powertrain.vehicle, -25000.0);
            let mut rev = a.clone();
            rev.reverse();
            prop_assert_eq!(a, rev);
        }

        #[test]
        fn fuel_nonnegative_and_zero_only_when_off(p in 1.0..72000.0f64) {
            let e = model().powertrain.engine;
            let op = e.operating_point(p).unwrap();
            prop_assert!(op.fuel_rate > 0.0);
        }

        #[test]
        fn rule_based_balances_power(p_trac in -25000.0..40000.0f64, v in 0.0..17.88f64, soc in 0.4..0.8f64) {
            let m = model();
            let p_trac = if v == 0.0 { 0.0 } else { p_trac };
            let (d, op) = rule_based_split(p_trac, 1700.0, v, PowertrainState { soc }, &m.rule_based, &m.powertrain).unwrap();
            prop_assert!((d.p_bat - (p_trac + 1700.0 - op.p_eng)).abs() < 1e-9);
            prop_assert!(m.powertrain.battery.contains(d.p_bat));
            prop_assert_eq!(op.fuel_rate == 0.0, d.e_mode == EngineMode::EngineOff);
        }
    }
}
