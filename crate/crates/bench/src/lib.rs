//! Fixtures shared by the benchmarks.

use ecotherm::config::{PlannerKind, Scenario};
use ecotherm::dp::DpProblem;
use ecotherm::harness::plan_trip;
use ecotherm::powertrain::traction_power;
use ecotherm::SpeedProfile;

/// Default scenario with the eco trip of a 53 km/h vehicle entering at t = 0.
pub fn default_trip(planner: PlannerKind) -> (Scenario, SpeedProfile) {
    let s = Scenario::bundled().expect("bundled scenario");
    let p = plan_trip(&s.corridor, &s.model, planner, 53.0 / 3.6, 0.0).expect("trip");
    (s, p)
}

/// The DP problem the harness solves for that trip.
pub fn default_dp_problem() -> DpProblem {
    let (s, p) = default_trip(PlannerKind::Eco);
    let m = &s.model;
    let mut demand = traction_power(&p, &m.powertrain.vehicle, m.powertrain.battery.p_bat_min);
    demand.pop();
    DpProblem {
        demand,
        p_aux: s.environment.p_aux,
        ac_on: s.environment.ac_on,
        soc0: s.initial.soc0,
        soc_grid: m.dp.soc_grid(),
        p_bat_grid: m.dp.p_bat_grid(),
        terminal: m.dp.terminal(s.initial.soc0),
        soc_model: m.powertrain.soc_model,
        engine: m.powertrain.engine.clone(),
        battery: m.powertrain.battery,
    }
}
