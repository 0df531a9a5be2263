//! End-to-end simulation: corridor → speed plan → power split → thermal and
//! emissions, plus the seeded four-way batch experiment and its exports.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigDigests, ControllerKind, ModelConfig, PlannerKind, Scenario};
use crate::corridor::Corridor;
use crate::dp::{solve, DpProblem};
use crate::error::{Error, Result};
use crate::planner::{
    plan_baseline_profile, plan_eco_over_windows, plan_free_leg_baseline, plan_free_leg_eco, FreeLeg,
    PlannerContext,
};
use crate::powertrain::{
    rule_based_split, soc_step, traction_power, ControlDecision, EngineMode, EngineOp, PowertrainState,
};
use crate::profile::{DrivingMode, SpeedProfile};
use crate::table::Grid2d;
use crate::thermal::{
    catalyst_step, conversion_efficiency, coolant_step, engine_out_emissions, heat_split, tailpipe_step,
    EmissionRates, ThermalState,
};

/// Catalyst temperature taken as light-off, degC.
pub const LIGHT_OFF_TEMP: f64 = 200.0;

/// Fuel energy plus the energy value of the SOC change, kWh. A SOC deficit
/// adds energy, a surplus is credited.
pub fn equivalent_energy(fuel_g: f64, delta_soc: f64, fuel_lhv: f64, capacity_kwh: f64) -> f64 {
    fuel_g * fuel_lhv / 3.6e6 - delta_soc * capacity_kwh
}

/// Percentage reduction of `z_test` relative to `z_base`.
pub fn emission_improvement(z_base: f64, z_test: f64) -> Result<f64> {
    if z_base == 0.0 {
        return Err(Error::ZeroBaseline);
    }
    if !(z_base > 0.0) {
        return Err(Error::invalid(format!("baseline emission {z_base} must be positive")));
    }
    Ok((z_base - z_test) / z_base * 100.0)
}

/// Plans the whole corridor: one receding leg per intersection, then a free
/// leg to the corridor end.
pub fn plan_trip(
    corridor: &Corridor,
    model: &ModelConfig,
    planner: PlannerKind,
    v0: f64,
    entry_time: f64,
) -> Result<SpeedProfile> {
    let settings = &model.planner;
    let mut trip = SpeedProfile::point(entry_time, v0, DrivingMode::Cruise);
    let mut pos = 0.0;
    for x in &corridor.intersections {
        let (t, v) = (trip.end_time(), trip.last_speed());
        if pos >= x.position {
            return Err(Error::invalid(format!(
                "leg overran the stop bar at {} m (at {pos:.1} m)",
                x.position
            )));
        }
        let qm = corridor.queue_model(x);
        let windows = x.green_windows(t, corridor.max_window_cycles, &qm)?;
        let first = *windows.first().ok_or(Error::NoWindowInHorizon {
            start_cycle: x.signal().cycle_index(t),
            cycles: corridor.max_window_cycles,
        })?;
        let ctx = PlannerContext {
            t_now: t,
            current_position: pos,
            current_speed: v,
            stopbar_position: x.position,
            speed_limit: corridor.speed_limit,
            green_window: first,
            a_max: settings.a_max,
            a_min: settings.a_min,
            tuning: settings.tuning(),
        };
        let leg = match planner {
            PlannerKind::Eco => plan_eco_over_windows(&ctx, &windows)?,
            PlannerKind::Baseline => plan_baseline_profile(&ctx, &x.signal())?,
        };
        pos += leg.distance();
        trip.extend(&leg)?;
    }
    let leg = FreeLeg {
        t_now: trip.end_time(),
        current_speed: trip.last_speed(),
        distance: corridor.length - pos,
        speed_limit: corridor.speed_limit,
        a_max: settings.a_max,
        a_min: settings.a_min,
    };
    let last = match planner {
        PlannerKind::Eco => plan_free_leg_eco(&leg, &settings.tuning())?,
        PlannerKind::Baseline => plan_free_leg_baseline(&leg)?,
    };
    trip.extend(&last)?;
    Ok(trip)
}

/// One row of the per-second export. Control and emission columns describe
/// the step starting at `t`; the final row carries the end state only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    pub v: f64,
    pub mode: DrivingMode,
    pub p_trac: f64,
    pub e_mode: u8,
    pub p_bat: f64,
    pub p_eng: f64,
    pub soc: f64,
    pub t_cl: f64,
    pub t_cat: f64,
    pub hc_eo: f64,
    pub co_eo: f64,
    pub nox_eo: f64,
    pub hc_tp: f64,
    pub co_tp: f64,
    pub nox_tp: f64,
}

pub const SERIES_COLUMNS: [&str; 16] = [
    "t", "v", "mode", "p_trac", "e_mode", "p_bat", "p_eng", "soc", "t_cl", "t_cat", "hc_eo", "co_eo", "nox_eo",
    "hc_tp", "co_tp", "nox_tp",
];

/// Scalar outcome of one simulated drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub planner: PlannerKind,
    pub controller: ControllerKind,
    pub v0_kmh: f64,
    pub entry_time: f64,
    pub t_cat0: f64,
    pub energy_kwh: f64,
    pub fuel_g: f64,
    pub delta_soc: f64,
    pub final_soc: f64,
    /// Cumulative engine-out mass, g.
    pub engine_out: EmissionRates,
    /// Cumulative tailpipe mass, g.
    pub tailpipe: EmissionRates,
    pub duration_s: f64,
    pub stops: usize,
    pub mean_t_cl: f64,
    pub mean_t_cat: f64,
    /// Seconds until the catalyst first reaches light-off; the trip
    /// duration when it never does.
    pub time_to_lightoff_s: f64,
    pub lightoff_reached: bool,
    /// Mass-weighted conversion efficiency per species; 1 when nothing
    /// was emitted.
    pub conversion_efficiency: EmissionRates,
    /// DP objective (fuel plus terminal cost), g.
    pub dp_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub summary: CaseSummary,
    pub series: Vec<SeriesRow>,
}

/// Inputs of one drive besides the shared configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseInputs {
    pub v0_kmh: f64,
    pub entry_time: f64,
    pub soc0: f64,
    pub t_cl0: f64,
    pub t_cat0: f64,
}

/// Controls per step from either controller.
struct SplitTrace {
    decisions: Vec<ControlDecision>,
    ops: Vec<EngineOp>,
    soc: Vec<f64>,
    dp_value: Option<f64>,
}

fn case_failed(step: usize, t: f64, snapshot: String, source: Error) -> Error {
    Error::CaseFailed {
        step,
        t,
        snapshot,
        source: Box::new(source),
    }
}

fn rule_based_trace(
    scenario: &Scenario,
    profile: &SpeedProfile,
    p_trac: &[f64],
    soc0: f64,
) -> Result<SplitTrace> {
    let m = &scenario.model;
    let env = &scenario.environment;
    let k_max = p_trac.len();
    let mut soc = Vec::with_capacity(k_max + 1);
    let mut decisions = Vec::with_capacity(k_max);
    let mut ops = Vec::with_capacity(k_max);
    let mut state = PowertrainState { soc: soc0 };
    soc.push(soc0);
    for k in 0..k_max {
        let v = 0.5 * (profile.speeds[k] + profile.speeds[k + 1]);
        let (d, op) = rule_based_split(p_trac[k], env.p_aux, v, state, &m.rule_based, &m.powertrain).map_err(|e| {
            case_failed(k, profile.time(k), format!("v={v:.3} p_trac={:.0} soc={:.4}", p_trac[k], state.soc), e)
        })?;
        state = soc_step(state, d.p_bat - env.p_aux, env.p_aux, env.ac_on, &m.powertrain.soc_model).state;
        soc.push(state.soc);
        decisions.push(d);
        ops.push(op);
    }
    Ok(SplitTrace {
        decisions,
        ops,
        soc,
        dp_value: None,
    })
}

fn dp_trace(scenario: &Scenario, profile: &SpeedProfile, p_trac: &[f64], soc0: f64) -> Result<SplitTrace> {
    let m = &scenario.model;
    let problem = DpProblem {
        demand: p_trac.to_vec(),
        p_aux: scenario.environment.p_aux,
        ac_on: scenario.environment.ac_on,
        soc0,
        soc_grid: m.dp.soc_grid(),
        p_bat_grid: m.dp.p_bat_grid(),
        terminal: m.dp.terminal(soc0),
        soc_model: m.powertrain.soc_model,
        engine: m.powertrain.engine.clone(),
        battery: m.powertrain.battery,
    };
    let sol = solve(&problem).map_err(|e| match e {
        Error::NoFeasiblePolicy { step, soc } => case_failed(
            step,
            profile.time(step),
            format!("p_trac={:.0} soc={soc:.4}", p_trac[step]),
            e,
        ),
        e => e,
    })?;
    Ok(SplitTrace {
        decisions: sol.decisions,
        ops: sol.ops,
        soc: sol.soc,
        dp_value: Some(sol.value),
    })
}

/// Evaluates a planned profile under one controller. Thermal states do not
/// feed back into the split.
pub fn simulate_profile(
    scenario: &Scenario,
    profile: &SpeedProfile,
    controller: ControllerKind,
    inputs: &CaseInputs,
    planner: PlannerKind,
) -> Result<CaseResult> {
    let m = &scenario.model;
    let env = &scenario.environment;
    let mut p_trac = traction_power(profile, &m.powertrain.vehicle, m.powertrain.battery.p_bat_min);
    p_trac.pop();
    let k_max = p_trac.len();
    let split = if k_max == 0 {
        SplitTrace {
            decisions: Vec::new(),
            ops: Vec::new(),
            soc: vec![inputs.soc0],
            dp_value: None,
        }
    } else {
        match controller {
            ControllerKind::RuleBased => rule_based_trace(scenario, profile, &p_trac, inputs.soc0)?,
            ControllerKind::Dp => dp_trace(scenario, profile, &p_trac, inputs.soc0)?,
        }
    };

    let mut th = ThermalState {
        t_cl: inputs.t_cl0,
        t_cat: inputs.t_cat0,
    };
    let mut series = Vec::with_capacity(k_max + 1);
    let mut eo_total = EmissionRates::ZERO;
    let mut tp_total = EmissionRates::ZERO;
    let (mut sum_cl, mut sum_cat) = (0.0, 0.0);
    let mut lightoff: Option<f64> = None;
    for k in 0..=k_max {
        if lightoff.is_none() && th.t_cat >= LIGHT_OFF_TEMP {
            lightoff = Some(k as f64);
        }
        sum_cl += th.t_cl;
        sum_cat += th.t_cat;
        let mut row = SeriesRow {
            t: profile.time(k),
            v: profile.speeds[k],
            mode: profile.modes[k],
            p_trac: 0.0,
            e_mode: EngineMode::EngineOff.code(),
            p_bat: 0.0,
            p_eng: 0.0,
            soc: split.soc[k],
            t_cl: th.t_cl,
            t_cat: th.t_cat,
            hc_eo: 0.0,
            co_eo: 0.0,
            nox_eo: 0.0,
            hc_tp: 0.0,
            co_tp: 0.0,
            nox_tp: 0.0,
        };
        if k < k_max {
            let (d, op) = (split.decisions[k], split.ops[k]);
            // Any surplus over the balance is braking power left to friction.
            let friction = d.p_bat - (p_trac[k] + env.p_aux - op.p_eng);
            debug_assert!(friction.abs() < 1e-6 || (p_trac[k] < 0.0 && friction > 0.0 && friction <= -p_trac[k] + 1e-6));
            let v = 0.5 * (profile.speeds[k] + profile.speeds[k + 1]);
            let snapshot = || format!("v={v:.3} soc={:.4} t_cl={:.2} t_cat={:.2}", split.soc[k], th.t_cl, th.t_cat);
            let eo = engine_out_emissions(op.omega, op.p_eng, &m.emissions)
                .map_err(|e| case_failed(k, row.t, snapshot(), e))?;
            let tp = tailpipe_step(eo, th.t_cat, &m.catalyst_curves);
            debug_assert!(tp.hc <= eo.hc && tp.co <= eo.co && tp.nox <= eo.nox);
            let heat = heat_split(op.fuel_rate, &m.thermal, th.t_cl, env.t_amb, v);
            let next = ThermalState {
                t_cl: coolant_step(th.t_cl, &heat, op.p_eng, &m.thermal),
                t_cat: catalyst_step(
                    th.t_cat,
                    heat.exhaust_flow,
                    heat.exhaust_temp,
                    eo,
                    env.t_amb,
                    &m.catalyst_curves,
                    &m.thermal,
                ),
            };
            next.check_bounds(env.t_amb).map_err(|e| case_failed(k, row.t, snapshot(), e))?;
            row.p_trac = p_trac[k];
            row.e_mode = d.e_mode.code();
            row.p_bat = d.p_bat;
            row.p_eng = op.p_eng;
            [row.hc_eo, row.co_eo, row.nox_eo] = eo.as_array();
            [row.hc_tp, row.co_tp, row.nox_tp] = tp.as_array();
            eo_total += eo;
            tp_total += tp;
            th = next;
        }
        series.push(row);
    }

    let fuel_g: f64 = split.ops.iter().map(|o| o.fuel_rate).sum();
    let final_soc = split.soc[k_max];
    let delta_soc = final_soc - inputs.soc0;
    let samples = (k_max + 1) as f64;
    let stops = profile
        .speeds
        .windows(2)
        .filter(|w| w[0] > 0.0 && w[1] == 0.0)
        .count();
    let summary = CaseSummary {
        planner,
        controller,
        v0_kmh: inputs.v0_kmh,
        entry_time: inputs.entry_time,
        t_cat0: inputs.t_cat0,
        energy_kwh: equivalent_energy(fuel_g, delta_soc, m.thermal.fuel_lhv, m.powertrain.battery.capacity_kwh),
        fuel_g,
        delta_soc,
        final_soc,
        engine_out: eo_total,
        tailpipe: tp_total,
        duration_s: k_max as f64,
        stops,
        mean_t_cl: sum_cl / samples,
        mean_t_cat: sum_cat / samples,
        time_to_lightoff_s: lightoff.unwrap_or(k_max as f64),
        lightoff_reached: lightoff.is_some(),
        conversion_efficiency: eo_total.zip(tp_total, |eo, tp| if eo > 0.0 { 1.0 - tp / eo } else { 1.0 }),
        dp_value: split.dp_value,
    };
    Ok(CaseResult { summary, series })
}

/// Runs the scenario's own planner, controller and initial conditions.
pub fn run_case(scenario: &Scenario) -> Result<CaseResult> {
    let i = &scenario.initial;
    let inputs = CaseInputs {
        v0_kmh: i.v0_kmh,
        entry_time: i.entry_time,
        soc0: i.soc0,
        t_cl0: i.t_cl0,
        t_cat0: i.t_cat0,
    };
    let profile = plan_trip(&scenario.corridor, &scenario.model, scenario.planner, i.v0_kmh / 3.6, i.entry_time)?;
    simulate_profile(scenario, &profile, scenario.controller, &inputs, scenario.planner)
}

/// Planner/controller pairing of the comparison matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Combo {
    pub planner: PlannerKind,
    pub controller: ControllerKind,
}

impl Combo {
    pub fn label(&self) -> String {
        format!("{}+{}", self.planner, self.controller)
    }
}

pub const BASELINE_RULE: Combo = Combo {
    planner: PlannerKind::Baseline,
    controller: ControllerKind::RuleBased,
};
pub const BASELINE_DP: Combo = Combo {
    planner: PlannerKind::Baseline,
    controller: ControllerKind::Dp,
};
pub const ECO_RULE: Combo = Combo {
    planner: PlannerKind::Eco,
    controller: ControllerKind::RuleBased,
};
pub const ECO_DP: Combo = Combo {
    planner: PlannerKind::Eco,
    controller: ControllerKind::Dp,
};
pub const COMBOS: [Combo; 4] = [BASELINE_RULE, BASELINE_DP, ECO_RULE, ECO_DP];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub index: usize,
    pub v0_kmh: f64,
    pub entry_time: f64,
}

/// Draws the batch's vehicles from the seeded generator.
pub fn draw_vehicles(scenario: &Scenario, n: usize, seed: u64) -> Vec<Vehicle> {
    let b = &scenario.batch;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|index| Vehicle {
            index,
            v0_kmh: rng.gen_range(b.v0_min_kmh..=b.v0_max_kmh),
            entry_time: scenario.initial.entry_time + index as f64 * b.entry_headway,
        })
        .collect()
}

/// Outcome of every combination for every vehicle, in `COMBOS` order.
#[derive(Debug, Clone)]
pub struct BatchResult {
    pub seed: u64,
    pub t_cat0: f64,
    pub digests: ConfigDigests,
    pub vehicles: Vec<Vehicle>,
    pub outcomes: Vec<[std::result::Result<CaseResult, String>; 4]>,
}

fn run_vehicle(scenario: &Scenario, v: &Vehicle, t_cat0: f64) -> [std::result::Result<CaseResult, String>; 4] {
    let inputs = CaseInputs {
        v0_kmh: v.v0_kmh,
        entry_time: v.entry_time,
        soc0: scenario.initial.soc0,
        t_cl0: scenario.initial.t_cl0,
        t_cat0,
    };
    let plan = |p| plan_trip(&scenario.corridor, &scenario.model, p, v.v0_kmh / 3.6, v.entry_time);
    let baseline = plan(PlannerKind::Baseline);
    let eco = plan(PlannerKind::Eco);
    COMBOS.map(|c| {
        let profile = match c.planner {
            PlannerKind::Baseline => &baseline,
            PlannerKind::Eco => &eco,
        };
        profile
            .as_ref()
            .map_err(|e| e.to_string())
            .and_then(|p| {
                simulate_profile(scenario, p, c.controller, &inputs, c.planner).map_err(|e| e.to_string())
            })
    })
}

/// Runs all four combinations for `n` seeded vehicles. Vehicles run in
/// parallel on the current rayon pool; results keep vehicle order.
pub fn run_batch(scenario: &Scenario, n: usize, seed: u64, t_cat0: f64) -> Result<BatchResult> {
    if n == 0 {
        return Err(Error::invalid("batch needs at least one vehicle"));
    }
    let vehicles = draw_vehicles(scenario, n, seed);
    let outcomes = vehicles.par_iter().map(|v| run_vehicle(scenario, v, t_cat0)).collect();
    Ok(BatchResult {
        seed,
        t_cat0,
        digests: scenario.digests.clone(),
        vehicles,
        outcomes,
    })
}

impl BatchResult {
    pub fn failures(&self) -> usize {
        self.outcomes.iter().flatten().filter(|o| o.is_err()).count()
    }

    pub fn case(&self, vehicle: usize, combo: Combo) -> Option<&CaseResult> {
        let i = COMBOS.iter().position(|c| *c == combo)?;
        self.outcomes.get(vehicle)?[i].as_ref().ok()
    }

    pub fn summary(&self) -> BatchSummary {
        let mut cases = Vec::new();
        for (v, outs) in self.vehicles.iter().zip(&self.outcomes) {
            for (combo, out) in COMBOS.iter().zip(outs) {
                cases.push(CaseRecord {
                    index: v.index,
                    combo: combo.label(),
                    result: out.as_ref().ok().map(|r| r.summary.clone()),
                    error: out.as_ref().err().cloned(),
                });
            }
        }
        let combos = COMBOS.iter().map(|&c| self.combo_summary(c)).collect();
        BatchSummary {
            seed: self.seed,
            n: self.vehicles.len(),
            t_cat0: self.t_cat0,
            digests: self.digests.clone(),
            failures: self.failures(),
            vehicles: self.vehicles.clone(),
            combos,
            cases,
        }
    }

    fn combo_summary(&self, combo: Combo) -> ComboSummary {
        let done: Vec<&CaseSummary> = (0..self.vehicles.len())
            .filter_map(|i| self.case(i, combo).map(|r| &r.summary))
            .collect();
        let mean = |f: &dyn Fn(&CaseSummary) -> f64| mean_of(done.iter().map(|c| f(c)));
        let pairs: Vec<(&CaseSummary, &CaseSummary)> = (0..self.vehicles.len())
            .filter_map(|i| Some((&self.case(i, BASELINE_RULE)?.summary, &self.case(i, combo)?.summary)))
            .collect();
        let savings: Vec<f64> = pairs
            .iter()
            .filter_map(|(b, t)| emission_improvement(b.energy_kwh, t.energy_kwh).ok())
            .collect();
        let index = |f: fn(&EmissionRates) -> f64| {
            let vals: Vec<Option<f64>> = pairs
                .iter()
                .map(|(b, t)| emission_improvement(f(&b.tailpipe), f(&t.tailpipe)).ok())
                .collect();
            ImprovementIndex {
                mean_pct: mean_of(vals.iter().flatten().copied()),
                excluded: vals.iter().filter(|v| v.is_none()).count(),
            }
        };
        ComboSummary {
            combo: combo.label(),
            planner: combo.planner,
            controller: combo.controller,
            completed: done.len(),
            failed: self.vehicles.len() - done.len(),
            mean_energy_kwh: mean(&|c| c.energy_kwh),
            mean_fuel_g: mean(&|c| c.fuel_g),
            mean_delta_soc: mean(&|c| c.delta_soc),
            mean_duration_s: mean(&|c| c.duration_s),
            mean_t_cl: mean(&|c| c.mean_t_cl),
            mean_t_cat: mean(&|c| c.mean_t_cat),
            mean_time_to_lightoff_s: mean(&|c| c.time_to_lightoff_s),
            mean_engine_out: EmissionRates {
                hc: mean(&|c| c.engine_out.hc).unwrap_or(0.0),
                co: mean(&|c| c.engine_out.co).unwrap_or(0.0),
                nox: mean(&|c| c.engine_out.nox).unwrap_or(0.0),
            },
            mean_tailpipe: EmissionRates {
                hc: mean(&|c| c.tailpipe.hc).unwrap_or(0.0),
                co: mean(&|c| c.tailpipe.co).unwrap_or(0.0),
                nox: mean(&|c| c.tailpipe.nox).unwrap_or(0.0),
            },
            mean_saving_pct: mean_of(savings.iter().copied()),
            improvement_hc: index(|e| e.hc),
            improvement_co: index(|e| e.co),
            improvement_nox: index(|e| e.nox),
        }
    }
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Batch mean of an emission improvement index and how many cases were
/// left out for a zero baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImprovementIndex {
    pub mean_pct: Option<f64>,
    pub excluded: usize,
}

/// Means over the completed cases of one combination. Savings and
/// improvement indices are relative to baseline planning with the
/// rule-based controller for the same vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboSummary {
    pub combo: String,
    pub planner: PlannerKind,
    pub controller: ControllerKind,
    pub completed: usize,
    pub failed: usize,
    pub mean_energy_kwh: Option<f64>,
    pub mean_fuel_g: Option<f64>,
    pub mean_delta_soc: Option<f64>,
    pub mean_duration_s: Option<f64>,
    pub mean_t_cl: Option<f64>,
    pub mean_t_cat: Option<f64>,
    pub mean_time_to_lightoff_s: Option<f64>,
    pub mean_engine_out: EmissionRates,
    pub mean_tailpipe: EmissionRates,
    pub mean_saving_pct: Option<f64>,
    pub improvement_hc: ImprovementIndex,
    pub improvement_co: ImprovementIndex,
    pub improvement_nox: ImprovementIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub index: usize,
    pub combo: String,
    pub result: Option<CaseSummary>,
    pub error: Option<String>,
}

/// Everything written to `summary.json` for a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub seed: u64,
    pub n: usize,
    pub t_cat0: f64,
    pub digests: ConfigDigests,
    pub failures: usize,
    pub vehicles: Vec<Vehicle>,
    pub combos: Vec<ComboSummary>,
    pub cases: Vec<CaseRecord>,
}

/// Everything written to `summary.json` for a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub digests: ConfigDigests,
    pub case: CaseSummary,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(format!("json: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Writes the per-second series with the fixed `SERIES_COLUMNS` header.
pub fn write_series_csv(path: &Path, rows: &[SeriesRow]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let err = |e: csv::Error| Error::invalid(format!("{}: {e}", path.display()));
    w.write_record(SERIES_COLUMNS).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const CASE_COLUMNS: [&str; 20] = [
    "index", "combo", "v0_kmh", "entry_time", "t_cat0", "energy_kwh", "fuel_g", "delta_soc", "duration_s", "stops",
    "mean_t_cl", "mean_t_cat", "time_to_lightoff_s", "hc_eo_g", "co_eo_g", "nox_eo_g", "hc_tp_g", "co_tp_g",
    "nox_tp_g", "error",
];

fn write_case_table(path: &Path, cases: &[CaseRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let err = |e: csv::Error| Error::invalid(format!("{}: {e}", path.display()));
    w.write_record(CASE_COLUMNS).map_err(err)?;
    for c in cases {
        let mut row = vec![c.index.to_string(), c.combo.clone()];
        match &c.result {
            Some(r) => {
                let nums = [
                    r.v0_kmh,
                    r.entry_time,
                    r.t_cat0,
                    r.energy_kwh,
                    r.fuel_g,
                    r.delta_soc,
                    r.duration_s,
                    r.stops as f64,
                    r.mean_t_cl,
                    r.mean_t_cat,
                    r.time_to_lightoff_s,
                    r.engine_out.hc,
                    r.engine_out.co,
                    r.engine_out.nox,
                    r.tailpipe.hc,
                    r.tailpipe.co,
                    r.tailpipe.nox,
                ];
                row.extend(nums.iter().map(|x| x.to_string()));
                row.push(String::new());
            }
            None => {
                row.extend(std::iter::repeat_n(String::new(), CASE_COLUMNS.len() - 3));
                row.push(c.error.clone().unwrap_or_default());
            }
        }
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `summary.json`, `cases.csv` and one series CSV per completed case under
/// `series/`.
pub fn export_batch(result: &BatchResult, dir: &Path) -> Result<BatchSummary> {
    let summary = result.summary();
    export_batch_summary(&summary, dir)?;
    let series_dir = dir.join("series");
    create_dir(&series_dir)?;
    for (v, outs) in result.vehicles.iter().zip(&result.outcomes) {
        for (combo, out) in COMBOS.iter().zip(outs) {
            if let Ok(r) = out {
                let name = format!("{}_{:03}.csv", combo.label().replace('+', "_"), v.index);
                write_series_csv(&series_dir.join(name), &r.series)?;
            }
        }
    }
    Ok(summary)
}

/// Writes the summary files alone; an empty summary yields header-only tables.
pub fn export_batch_summary(summary: &BatchSummary, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_json(&dir.join("summary.json"), summary)?;
    write_case_table(&dir.join("cases.csv"), &summary.cases)
}

/// `summary.json` and `series.csv` for a single run.
pub fn export_run(result: &CaseResult, digests: &ConfigDigests, dir: &Path) -> Result<RunSummary> {
    create_dir(dir)?;
    let summary = RunSummary {
        digests: digests.clone(),
        case: result.summary.clone(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    write_series_csv(&dir.join("series.csv"), &result.series)?;
    Ok(summary)
}

/// Writes one CSV row per record, mapping csv errors to the file path.
fn write_rows<I, R>(path: &Path, rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.write_record(r).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_grid(path: &Path, g: &Grid2d) -> Result<()> {
    let header = std::iter::once("omega".to_string()).chain(g.power.iter().map(f64::to_string));
    let rows = g
        .omega
        .iter()
        .zip(&g.values)
        .map(|(w, r)| std::iter::once(w.to_string()).chain(r.iter().map(f64::to_string)).collect::<Vec<_>>());
    write_rows(path, std::iter::once(header.collect::<Vec<_>>()).chain(rows))
}

/// Catalyst temperatures at which the efficiency table is sampled, degC.
pub const EFFICIENCY_TABLE_TEMPS: (f64, f64, f64) = (0.0, 600.0, 5.0);

/// The active fuel, emission, operating-line and conversion-efficiency
/// tables as CSV files in `dir`.
pub fn export_maps(model: &ModelConfig, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let e = &model.powertrain.engine;
    write_grid(&dir.join("fuel_map.csv"), &e.fuel_map)?;
    write_grid(&dir.join("hc_map.csv"), &model.emissions.hc)?;
    write_grid(&dir.join("co_map.csv"), &model.emissions.co)?;
    write_grid(&dir.join("nox_map.csv"), &model.emissions.nox)?;
    let ool = e.ool.power.iter().zip(&e.ool.omega).map(|(p, w)| [p.to_string(), w.to_string()]);
    write_rows(&dir.join("ool.csv"), std::iter::once(["power".into(), "omega".into()]).chain(ool))?;
    let (lo, hi, step) = EFFICIENCY_TABLE_TEMPS;
    let n = ((hi - lo) / step).round() as usize;
    let c = &model.catalyst_curves;
    let eff = (0..=n).map(|i| {
        let t = lo + i as f64 * step;
        [t, conversion_efficiency(t, &c.hc), conversion_efficiency(t, &c.co), conversion_efficiency(t, &c.nox)]
            .map(|x| x.to_string())
    });
    let header = ["t_cat", "hc", "co", "nox"].map(String::from);
    write_rows(&dir.join("efficiency.csv"), std::iter::once(header).chain(eff))
}

/// Headline metrics compared between two result files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub energy_kwh: f64,
    pub fuel_g: f64,
    pub tailpipe: EmissionRates,
}

/// A summary file of either kind, reduced to labelled metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnySummary {
    Batch(BatchSummary),
    Run(RunSummary),
}

impl AnySummary {
    pub fn metrics(&self) -> BTreeMap<String, Metrics> {
        match self {
            AnySummary::Run(r) => {
                let c = &r.case;
                let label = Combo {
                    planner: c.planner,
                    controller: c.controller,
                }
                .label();
                BTreeMap::from([(
                    label,
                    Metrics {
                        energy_kwh: c.energy_kwh,
                        fuel_g: c.fuel_g,
                        tailpipe: c.tailpipe,
                    },
                )])
            }
            AnySummary::Batch(b) => b
                .combos
                .iter()
                .filter_map(|c| {
                    Some((
                        c.combo.clone(),
                        Metrics {
                            energy_kwh: c.mean_energy_kwh?,
                            fuel_g: c.mean_fuel_g?,
                            tailpipe: c.mean_tailpipe,
                        },
                    ))
                })
                .collect(),
        }
    }
}

/// One line of a comparison: percentage improvement of `test` over `base`,
/// `None` where the base value is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub base: Metrics,
    pub test: Metrics,
    pub energy_pct: Option<f64>,
    pub fuel_pct: Option<f64>,
    pub hc_pct: Option<f64>,
    pub co_pct: Option<f64>,
    pub nox_pct: Option<f64>,
}

/// Matches entries by label; two single-entry files are compared directly.
pub fn compare(base: &AnySummary, test: &AnySummary) -> Vec<ComparisonRow> {
    let (b, t) = (base.metrics(), test.metrics());
    let pairs: Vec<(String, Metrics, Metrics)> = if b.len() == 1 && t.len() == 1 {
        let (lb, mb) = b.iter().next().expect("one entry");
        let (lt, mt) = t.iter().next().expect("one entry");
        let label = if lb == lt { lb.clone() } else { format!("{lt} vs {lb}") };
        vec![(label, *mb, *mt)]
    } else {
        b.iter()
            .filter_map(|(l, mb)| t.get(l).map(|mt| (l.clone(), *mb, *mt)))
            .collect()
    };
    pairs
        .into_iter()
        .map(|(label, base, test)| {
            let pct = |x: f64, y: f64| emission_improvement(x, y).ok();
            ComparisonRow {
                label,
                energy_pct: pct(base.energy_kwh, test.energy_kwh),
                fuel_pct: pct(base.fuel_g, test.fuel_g),
                hc_pct: pct(base.tailpipe.hc, test.tailpipe.hc),
                co_pct: pct(base.tailpipe.co, test.tailpipe.co),
                nox_pct: pct(base.tailpipe.nox, test.tailpipe.nox),
                base,
                test,
            }
        })
        .collect()
}
