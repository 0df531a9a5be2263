//! Coolant and catalyst temperature dynamics, catalyst conversion efficiency
//! and engine-out/tailpipe emission rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::Grid2d;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalParams {
    /// Engine mass times specific heat, J/K.
    pub engine_thermal_mass: f64,
    /// J/K
    pub cat_thermal_mass: f64,
    /// degC
    pub thermostat_temp: f64,
    /// W/K above the thermostat temperature.
    pub radiator_gain: f64,
    /// W/K
    pub conv_coeff_base: f64,
    /// W/K per m/s of vehicle speed.
    pub conv_coeff_speed: f64,
    pub exhaust_heat_fraction: f64,
    pub coolant_heat_fraction: f64,
    /// J/g
    pub fuel_lhv: f64,
    /// W/K
    pub cat_ambient_loss: f64,
    /// J/(g K)
    pub exhaust_cp: f64,
    /// Air-fuel mass ratio of the exhaust stream.
    pub stoich_afr: f64,
    /// J per gram converted.
    pub reaction_enthalpy_hc: f64,
    pub reaction_enthalpy_co: f64,
    pub reaction_enthalpy_nox: f64,
}

impl ThermalParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.engine_thermal_mass,
            self.cat_thermal_mass,
            self.thermostat_temp,
            self.radiator_gain,
            self.conv_coeff_base,
            self.conv_coeff_speed,
            self.exhaust_heat_fraction,
            self.coolant_heat_fraction,
            self.fuel_lhv,
            self.cat_ambient_loss,
            self.exhaust_cp,
            self.stoich_afr,
        ];
        let enthalpies = [self.reaction_enthalpy_hc, self.reaction_enthalpy_co, self.reaction_enthalpy_nox];
        if positive.iter().any(|&x| !(x > 0.0 && x.is_finite()))
            || enthalpies.iter().any(|&x| !(x >= 0.0 && x.is_finite()))
            || self.exhaust_heat_fraction + self.coolant_heat_fraction >= 1.0
        {
            return Err(Error::Config(format!("invalid thermal parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    /// Coolant temperature, degC.
    pub t_cl: f64,
    /// Catalyst temperature, degC.
    pub t_cat: f64,
}

impl ThermalState {
    pub fn check_bounds(&self, t_amb: f64) -> Result<()> {
        for (name, t) in [("coolant", self.t_cl), ("catalyst", self.t_cat)] {
            if !(t >= t_amb - 1.0 && t <= 1100.0) {
                return Err(Error::invalid(format!("{name} temperature {t} degC out of bounds")));
            }
        }
        Ok(())
    }
}

/// Logistic conversion efficiency versus catalyst temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencyCurve {
    /// degC where efficiency is half of `eta_max`.
    pub t50: f64,
    /// 1/degC
    pub steepness: f64,
    pub eta_max: f64,
}

impl EfficiencyCurve {
    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.steepness > 0.0 && self.eta_max > 0.0 && self.eta_max <= 1.0 && self.t50.is_finite()) {
            return Err(Error::Config(format!("invalid efficiency curve {name}: {self:?}")));
        }
        Ok(())
    }
}

pub fn conversion_efficiency(t_cat: f64, curve: &EfficiencyCurve) -> f64 {
    curve.eta_max / (1.0 + (-curve.steepness * (t_cat - curve.t50)).exp())
}

/// One curve per species.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalystCurves {
    pub hc: EfficiencyCurve,
    pub co: EfficiencyCurve,
    pub nox: EfficiencyCurve,
}

impl CatalystCurves {
    pub fn validate(&self) -> Result<()> {
        self.hc.validate("hc")?;
        self.co.validate("co")?;
        self.nox.validate("nox")
    }

    pub fn efficiencies(&self, t_cat: f64) -> EmissionRates {
        EmissionRates {
            hc: conversion_efficiency(t_cat, &self.hc),
            co: conversion_efficiency(t_cat, &self.co),
            nox: conversion_efficiency(t_cat, &self.nox),
        }
    }
}

/// HC, CO and NOx triple; g/s for rates, g for cumulative masses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EmissionRates {
    pub hc: f64,
    pub co: f64,
    pub nox: f64,
}

impl EmissionRates {
    pub const ZERO: EmissionRates = EmissionRates {
        hc: 0.0,
        co: 0.0,
        nox: 0.0,
    };

    pub fn map(self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            hc: f(self.hc),
            co: f(self.co),
            nox: f(self.nox),
        }
    }

    pub fn zip(self, other: Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            hc: f(self.hc, other.hc),
            co: f(self.co, other.co),
            nox: f(self.nox, other.nox),
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.hc, self.co, self.nox]
    }
}

impl std::ops::Add for EmissionRates {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.zip(rhs, |a, b| a + b)
    }
}

impl std::ops::AddAssign for EmissionRates {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

/// Engine-out emission maps, g/s over (omega, power).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmissionMaps {
    pub hc: Grid2d,
    pub co: Grid2d,
    pub nox: Grid2d,
}

impl EmissionMaps {
    pub fn validate(&self) -> Result<()> {
        for (name, g) in [("emissions.hc", &self.hc), ("emissions.co", &self.co), ("emissions.nox", &self.nox)] {
            g.validate(name)?;
            if g.values.iter().flatten().any(|&v| v < 0.0) {
                return Err(Error::Config(format!("{name}: negative rate")));
            }
        }
        Ok(())
    }
}

pub fn engine_out_emissions(omega: f64, p_eng: f64, maps: &EmissionMaps) -> Result<EmissionRates> {
    if omega == 0.0 && p_eng == 0.0 {
        return Ok(EmissionRates::ZERO);
    }
    let look = |g: &Grid2d| {
        g.eval(omega, p_eng)
            .map(|x| x.max(0.0))
            .ok_or_else(|| Error::OutOfEnvelope(format!("({omega} rad/s, {p_eng} W) outside emission map")))
    };
    Ok(EmissionRates {
        hc: look(&maps.hc)?,
        co: look(&maps.co)?,
        nox: look(&maps.nox)?,
    })
}

pub fn tailpipe_step(engine_out: EmissionRates, t_cat: f64, curves: &CatalystCurves) -> EmissionRates {
    engine_out.zip(curves.efficiencies(t_cat), |eo, eta| eo * (1.0 - eta))
}

/// Heat flows of one step, W, plus the exhaust stream leaving the engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatSplit {
    pub q_fuel: f64,
    pub q_exh: f64,
    pub q_air: f64,
    pub q_rad: f64,
    /// g/s
    pub exhaust_flow: f64,
    /// degC
    pub exhaust_temp: f64,
}

/// The exhaust leaves at coolant temperature plus the rise its heat share
/// produces in the exhaust mass flow, never below ambient.
pub fn heat_split(fuel_rate: f64, params: &ThermalParams, t_cl: f64, t_amb: f64, v: f64) -> HeatSplit {
    let q_fuel = fuel_rate * params.fuel_lhv;
    let q_exh = params.exhaust_heat_fraction * q_fuel;
    let q_air = (params.conv_coeff_base + params.conv_coeff_speed * v) * (t_cl - t_amb);
    let q_rad = params.radiator_gain * (t_cl - params.thermostat_temp).max(0.0);
    let exhaust_flow = fuel_rate * (1.0 + params.stoich_afr);
    let exhaust_temp = if exhaust_flow > 0.0 {
        (t_cl + q_exh / (exhaust_flow * params.exhaust_cp)).max(t_amb)
    } else {
        t_amb
    };
    HeatSplit {
        q_fuel,
        q_exh,
        q_air,
        q_rad,
        exhaust_flow,
        exhaust_temp,
    }
}

/// Net heat into the coolant over one step, W.
pub fn coolant_net_heat(heat: &HeatSplit, p_eng: f64) -> f64 {
    heat.q_fuel - p_eng - heat.q_exh - heat.q_air - heat.q_rad
}

/// Coolant temperature after one 1 s step; no cabin heating.
pub fn coolant_step(t_cl: f64, heat: &HeatSplit, p_eng: f64, params: &ThermalParams) -> f64 {
    t_cl + coolant_net_heat(heat, p_eng) / params.engine_thermal_mass
}

/// Catalyst temperature after one 1 s step of a lumped model with exhaust
/// convection, conversion exotherm and ambient loss.
pub fn catalyst_step(
    t_cat: f64,
    exhaust_flow: f64,
    exhaust_temp: f64,
    engine_out: EmissionRates,
    t_amb: f64,
    curves: &CatalystCurves,
    params: &ThermalParams,
) -> f64 {
    let converted = engine_out.zip(curves.efficiencies(t_cat), |eo, eta| eo * eta);
    let q_reaction = converted.hc * params.reaction_enthalpy_hc
        + converted.co * params.reaction_enthalpy_co
        + converted.nox * params.reaction_enthalpy_nox;
    let q_in = params.exhaust_cp * exhaust_flow * (exhaust_temp - t_cat);
    let q_loss = params.cat_ambient_loss * (t_cat - t_amb);
    t_cat + (q_in + q_reaction - q_loss) / params.cat_thermal_mass
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;
    use crate::config::ModelConfig;

    fn params() -> ThermalParams {
        ModelConfig::bundled().unwrap().thermal
    }

    fn curves() -> CatalystCurves {
        ModelConfig::bundled().unwrap().catalyst_curves
    }

    #[test]
    fn engine_off_releases_no_heat() {
        let h = heat_split(0.0, &params(), 80.0, 30.0, 10.0);
        assert_eq!((h.q_fuel, h.q_exh, h.exhaust_flow), (0.0, 0.0, 0.0));
        assert_eq!(h.exhaust_temp, 30.0);
    }

    #[test]
    fn thermostat_closed_below_setpoint() {
        let p = params();
        let h = heat_split(1.0, &p, p.thermostat_temp - 5.0, 30.0, 10.0);
        assert_eq!(h.q_rad, 0.0);
        let h = heat_split(1.0, &p, p.thermostat_temp + 2.0, 30.0, 10.0);
        assert_relative_eq!(h.q_rad, 2.0 * p.radiator_gain);
    }

    #[test]
    fn one_gram_per_second_is_43_kw() {
        let h = heat_split(1.0, &params(), 80.0, 30.0, 0.0);
        assert_relative_eq!(h.q_fuel, 43_000.0);
    }

    #[test]
    fn coolant_equilibrium_and_hand_step() {
        let mut p = params();
        let zero = HeatSplit {
            q_fuel: 0.0,
            q_exh: 0.0,
            q_air: 0.0,
            q_rad: 0.0,
            exhaust_flow: 0.0,
            exhaust_temp: 30.0,
        };
        assert_eq!(coolant_step(75.0, &zero, 0.0, &p), 75.0);
        p.engine_thermal_mass = 200_000.0;
        let h = HeatSplit { q_fuel: 30_000.0, ..zero };
        assert_relative_eq!(coolant_step(75.0, &h, 20_000.0, &p), 75.05, epsilon = 1e-12);
        let cooling = HeatSplit { q_air: 500.0, q_rad: 100.0, ..zero };
        assert!(coolant_step(75.0, &cooling, 0.0, &p) < 75.0);
    }

    #[test]
    fn catalyst_rest_and_decay() {
        let (p, c) = (params(), curves());
        assert_eq!(catalyst_step(30.0, 0.0, 30.0, EmissionRates::ZERO, 30.0, &c, &p), 30.0);
        let mut t = 400.0;
        for _ in 0..100 {
            let next = catalyst_step(t, 0.0, 30.0, EmissionRates::ZERO, 30.0, &c, &p);
            assert!(next < t && next > 30.0);
            t = next;
        }
    }

    #[test]
    fn catalyst_warms_from_cold_by_hand() {
        let mut p = params();
        p.reaction_enthalpy_hc = 0.0;
        p.reaction_enthalpy_co = 0.0;
        p.reaction_enthalpy_nox = 0.0;
        let c = curves();
        let (flow, t_exh, t_amb) = (8.0, 600.0, 30.0);
        let mut hand = 50.0;
        let mut t = 50.0;
        for _ in 0..3 {
            hand += (p.exhaust_cp * flow * (t_exh - hand) - p.cat_ambient_loss * (hand - t_amb)) / p.cat_thermal_mass;
            let next = catalyst_step(t, flow, t_exh, EmissionRates::ZERO, t_amb, &c, &p);
            assert!(next > t);
            assert_relative_eq!(next, hand, max_relative = 1e-14);
            t = next;
        }
    }

    #[test]
    fn light_off_pins() {
        let c = curves();
        for curve in [c.co, c.nox] {
            assert_relative_eq!(conversion_efficiency(200.0, &curve), curve.eta_max / 2.0);
        }
        for curve in [c.hc, c.co, c.nox] {
            assert!(conversion_efficiency(300.0, &curve) > 0.98);
            assert!(conversion_efficiency(-1e6, &curve) < 1e-12);
        }
        assert!(c.hc.t50 > c.co.t50 && c.co.t50 == c.nox.t50);
    }

    #[test]
    fn tailpipe_pass_through_limits() {
        let eo = EmissionRates { hc: 0.01, co: 0.2, nox: 0.05 };
        let curve = |eta_max| EfficiencyCurve { t50: 200.0, steepness: 0.1, eta_max };
        let cold = CatalystCurves { hc: curve(1.0), co: curve(1.0), nox: curve(1.0) };
        assert_eq!(tailpipe_step(eo, -1e9, &cold), eo);
        assert_eq!(tailpipe_step(eo, 1e9, &cold), EmissionRates::ZERO);
        let half = tailpipe_step(eo, 200.0, &cold);
        assert_eq!(half, eo.map(|x| x * 0.5));
    }

    #[test]
    fn engine_out_identities() {
        let maps = ModelConfig::bundled().unwrap().emissions;
        assert_eq!(engine_out_emissions(0.0, 0.0, &maps).unwrap(), EmissionRates::ZERO);
        let (i, j) = (3, 5);
        let e = engine_out_emissions(maps.hc.omega[i], maps.hc.power[j], &maps).unwrap();
        assert_eq!(e.hc, maps.hc.values[i][j]);
        assert_eq!(e.co, maps.co.values[i][j]);
        assert_eq!(e.nox, maps.nox.values[i][j]);
        assert!(engine_out_emissions(1e4, 1e3, &maps).is_err());
    }

    #[test]
    fn hc_map_penalizes_low_load_most() {
        let m = ModelConfig::bundled().unwrap();
        let e = &m.powertrain.engine;
        let low = e.operating_point(4000.0).unwrap();
        let mid = e.operating_point(30000.0).unwrap();
        let lo = engine_out_emissions(low.omega, low.p_eng, &m.emissions).unwrap();
        let hi = engine_out_emissions(mid.omega, mid.p_eng, &m.emissions).unwrap();
        // Emission per gram of fuel at low versus mid load.
        let hc_ratio = (lo.hc / low.fuel_rate) / (hi.hc / mid.fuel_rate);
        let co_ratio = (lo.co / low.fuel_rate) / (hi.co / mid.fuel_rate);
        assert!(hc_ratio > co_ratio, "hc {hc_ratio} co {co_ratio}");
    }

    proptest! {
        #[test]
        fn efficiency_monotone(t in -100.0..900.0f64, dt in 0.0..50.0f64,
                               t50 in 100.0..400.0f64, k in 0.001..1.0f64, eta in 0.01..1.0f64) {
            let c = EfficiencyCurve { t50, steepness: k, eta_max: eta };
            let (a, b) = (conversion_efficiency(t, &c), conversion_efficiency(t + dt, &c));
            prop_assert!(a <= b);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn cold_catalyst_contracts_to_ambient(t in -20.0..1000.0f64, amb in -20.0..45.0f64) {
            let (p, c) = (params(), curves());
            let next = catalyst_step(t, 0.0, amb, EmissionRates::ZERO, amb, &c, &p);
            prop_assert!((next - amb).abs() <= (t - amb).abs());
        }

        #[test]
        fn tailpipe_never_exceeds_engine_out(hc in 0.0..1.0f64, co in 0.0..1.0f64, nox in 0.0..1.0f64, t in -50.0..900.0f64) {
            let eo = EmissionRates { hc, co, nox };
            let tp = tailpipe_step(eo, t, &curves());
            prop_assert!(tp.hc <= eo.hc && tp.co <= eo.co && tp.nox <= eo.nox);
            prop_assert!(tp.hc >= 0.0 && tp.co >= 0.0 && tp.nox >= 0.0);
        }
    }
}
