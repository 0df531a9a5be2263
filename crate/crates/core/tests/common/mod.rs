#![allow(dead_code)]

use ecotherm::config::ModelConfig;
use ecotherm::dp::{uniform_grid, DpProblem, TerminalCost};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-step SOC change is `-1e-5 p_bat`, so with `p_bat` on a 1 kW grid every
/// transition moves a whole number of 0.01 SOC cells.
pub const CELL_W: f64 = 1000.0;

/// Small problem whose transitions land exactly on the SOC grid.
pub fn small_problem(seed: u64) -> DpProblem {
    let m = ModelConfig::bundled().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = rng.gen_range(1..=4) as f64;
    let p_bat_grid = uniform_grid(-half * CELL_W, half * CELL_W, CELL_W);
    // Up to two extra braking candidates per step, so bound the horizon by
    // the worst-case branching factor.
    let branching = (p_bat_grid.len() * 2 + 1) as f64;
    let k_cap = (3e6f64.ln() / branching.ln()).floor() as usize;
    let k = rng.gen_range(1..=k_cap.clamp(1, 10));
    let demand = (0..k).map(|_| rng.gen_range(-6..=20) as f64 * CELL_W).collect();
    let mut soc_model = m.powertrain.soc_model;
    soc_model.xi = [-1e-5, 0.0, 0.0, -1e-5, 0.0, 0.0, -1e-5, 0.0, 0.0];
    let mut battery = m.powertrain.battery;
    battery.p_bat_max = rng.gen_range(1..=4) as f64 * CELL_W;
    battery.p_bat_min = -(rng.gen_range(1..=4) as f64) * CELL_W;
    DpProblem {
        demand,
        p_aux: rng.gen_range(0..=2) as f64 * CELL_W,
        ac_on: true,
        soc0: 0.5 + rng.gen_range(5..=15) as f64 * 0.01,
        soc_grid: uniform_grid(0.5, 0.7, 0.01),
        p_bat_grid,
        terminal: TerminalCost {
            soc_target: 0.6,
            weight: rng.gen_range(0.0..500.0),
            deficit_weight: rng.gen_range(0.0..20.0),
        },
        soc_model,
        engine: m.powertrain.engine,
        battery,
    }
}

/// Options at one step as `(fuel g, battery power in whole kW)`.
fn options(k: usize, p: &DpProblem) -> Vec<(f64, i64)> {
    let whole_kw = |x: f64| (x / CELL_W).round() as i64;
    let load = p.demand[k] + p.p_aux;
    let mut out = Vec::new();
    let battery_ok = |x: f64| x >= p.battery.p_bat_min && x <= p.battery.p_bat_max;
    if battery_ok(load) {
        out.push((0.0, whole_kw(load)));
    }
    for &b in &p.p_bat_grid {
        // Engine off, friction brakes absorb what the battery does not.
        if p.demand[k] < 0.0 && b > load && b <= p.p_aux && battery_ok(b) {
            out.push((0.0, whole_kw(b)));
        }
        let p_eng = load - b;
        if p_eng > 0.0 && p_eng <= p.engine.p_max && battery_ok(b) {
            if let Ok(op) = p.engine.operating_point(p_eng) {
                out.push((op.fuel_rate, whole_kw(b)));
            }
        }
    }
    out
}

/// Minimum of fuel plus terminal cost over every control sequence, with the
/// SOC tracked as an integer cell index.
pub fn brute_force(p: &DpProblem) -> f64 {
    let opts: Vec<Vec<(f64, i64)>> = (0..p.demand.len()).map(|k| options(k, p)).collect();
    let cell0 = ((p.soc0 - 0.5) / 0.01).round() as i64;
    let mut best = f64::INFINITY;
    let mut stack = vec![(0usize, cell0, 0.0f64)];
    while let Some((k, cell, fuel)) = stack.pop() {
        if k == opts.len() {
            best = best.min(fuel + p.terminal.eval(0.5 + cell as f64 * 0.01));
            continue;
        }
        for &(f, kw) in &opts[k] {
            let next = cell - kw;
            if (0..=20).contains(&next) {
                stack.push((k + 1, next, fuel + f));
            }
        }
    }
    best
}
