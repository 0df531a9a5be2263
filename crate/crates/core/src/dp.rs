//! Backward dynamic programming over SOC for the engine mode and battery
//! power that minimize fuel plus a terminal SOC penalty.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::powertrain::{BatteryParams, ControlDecision, EngineMode, EngineOp, EngineParams, SocModelParams};

/// Interpolation weights closer than this to a knot snap onto it, so that
/// transitions landing on a grid point never pick up an infinite neighbor.
const SNAP: f64 = 1e-9;
/// Slack on the SOC bounds for round-off in the transition.
const BOUND_EPS: f64 = 1e-12;

/// `weight (soc - target)^2 + deficit_weight max(0, target - soc)`, in grams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalCost {
    pub soc_target: f64,
    pub weight: f64,
    #[serde(default)]
    pub deficit_weight: f64,
}

impl TerminalCost {
    pub fn eval(&self, soc: f64) -> f64 {
        let d = soc - self.soc_target;
        self.weight * d * d + self.deficit_weight * (-d).max(0.0)
    }
}

/// Grid and penalty settings read from the model config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpSettings {
    pub soc_lo: f64,
    pub soc_hi: f64,
    pub soc_step: f64,
    pub p_bat_lo: f64,
    pub p_bat_hi: f64,
    pub p_bat_step: f64,
    /// g per SOC^2
    pub terminal_weight: f64,
    /// g per unit of SOC below target
    pub deficit_weight: f64,
    /// Largest value increase, g, tolerated when the SOC step is halved.
    pub refinement_tolerance: f64,
}

impl DpSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.soc_lo < self.soc_hi
            && self.soc_step > 0.0
            && self.p_bat_lo < self.p_bat_hi
            && self.p_bat_step > 0.0
            && self.terminal_weight >= 0.0
            && self.deficit_weight >= 0.0
            && self.refinement_tolerance >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid dp settings {self:?}")))
        }
    }

    pub fn soc_grid(&self) -> Vec<f64> {
        uniform_grid(self.soc_lo, self.soc_hi, self.soc_step)
    }

    pub fn p_bat_grid(&self) -> Vec<f64> {
        uniform_grid(self.p_bat_lo, self.p_bat_hi, self.p_bat_step)
    }

    pub fn terminal(&self, soc_target: f64) -> TerminalCost {
        TerminalCost {
            soc_target,
            weight: self.terminal_weight,
            deficit_weight: self.deficit_weight,
        }
    }
}

/// `lo, lo + step, ...` up to `hi`, with `hi` itself always included.
pub fn uniform_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let mut g: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
    if hi - g[n] > 1e-9 * step {
        g.push(hi);
    } else {
        g[n] = hi;
    }
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpProblem {
    /// Traction demand per step, W.
    pub demand: Vec<f64>,
    pub p_aux: f64,
    pub ac_on: bool,
    pub soc0: f64,
    pub soc_grid: Vec<f64>,
    pub p_bat_grid: Vec<f64>,
    pub terminal: TerminalCost,
    pub soc_model: SocModelParams,
    pub engine: EngineParams,
    pub battery: BatteryParams,
}

impl DpProblem {
    pub fn horizon(&self) -> usize {
        self.demand.len()
    }

    pub fn validate(&self) -> Result<()> {
        let increasing = |g: &[f64]| g.len() >= 2 && g.windows(2).all(|w| w[1] > w[0]);
        if self.demand.is_empty() {
            return Err(Error::invalid("dp horizon must be at least one step"));
        }
        if !increasing(&self.soc_grid) || !increasing(&self.p_bat_grid) {
            return Err(Error::invalid("dp grids must be strictly increasing with two or more points"));
        }
        if !(self.soc0 >= self.soc_grid[0] && self.soc0 <= self.soc_grid[self.soc_grid.len() - 1]) {
            return Err(Error::invalid(format!("soc0 {} outside the soc grid", self.soc0)));
        }
        if !(self.terminal.weight >= 0.0 && self.terminal.deficit_weight >= 0.0) {
            return Err(Error::invalid("terminal weights must be non-negative"));
        }
        Ok(())
    }

    fn soc_lo(&self) -> f64 {
        self.soc_grid[0].max(self.soc_model.soc_min)
    }

    fn soc_hi(&self) -> f64 {
        self.soc_grid[self.soc_grid.len() - 1].min(self.soc_model.soc_max)
    }
}

/// One admissible control with its engine operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub decision: ControlDecision,
    pub op: EngineOp,
    /// Motor/generator power, W.
    pub p_mg: f64,
}

/// Controls admissible at step `k` before the SOC bounds are applied.
fn step_controls(k: usize, problem: &DpProblem) -> Vec<Candidate> {
    let demand = problem.demand[k] + problem.p_aux;
    let mut out = Vec::with_capacity(problem.p_bat_grid.len() + 1);
    if problem.battery.contains(demand) {
        out.push(Candidate {
            decision: ControlDecision {
                e_mode: EngineMode::EngineOff,
                p_bat: demand,
            },
            op: EngineOp::OFF,
            p_mg: demand - problem.p_aux,
        });
    }
    // While braking, friction brakes may take any part of the regen power.
    if problem.demand[k] < 0.0 {
        for &p_bat in &problem.p_bat_grid {
            if p_bat > demand && p_bat <= problem.p_aux && problem.battery.contains(p_bat) {
                out.push(Candidate {
                    decision: ControlDecision {
                        e_mode: EngineMode::EngineOff,
                        p_bat,
                    },
                    op: EngineOp::OFF,
                    p_mg: p_bat - problem.p_aux,
                });
            }
        }
    }
    for &p_bat in &problem.p_bat_grid {
        let p_eng = demand - p_bat;
        if !(p_eng > 0.0 && p_eng <= problem.engine.p_max) || !problem.battery.contains(p_bat) {
            continue;
        }
        if let Ok(op) = problem.engine.operating_point(p_eng) {
            out.push(Candidate {
                decision: ControlDecision {
                    e_mode: EngineMode::EngineOn,
                    p_bat,
                },
                op,
                p_mg: p_bat - problem.p_aux,
            });
        }
    }
    out
}

fn next_soc(soc: f64, c: &Candidate, problem: &DpProblem) -> Option<f64> {
    let s = soc + problem.soc_model.delta(c.p_mg, problem.p_aux, problem.ac_on);
    let (lo, hi) = (problem.soc_lo(), problem.soc_hi());
    if s < lo - BOUND_EPS || s > hi + BOUND_EPS {
        None
    } else {
        Some(s.clamp(lo, hi))
    }
}

/// Controls admissible at step `k` from `soc`, i.e. whose transition stays
/// inside the SOC bounds without saturating.
pub fn feasible_controls(k: usize, soc: f64, problem: &DpProblem) -> Vec<Candidate> {
    step_controls(k, problem)
        .into_iter()
        .filter(|c| next_soc(soc, c, problem).is_some())
        .collect()
}

/// Linear interpolation on `grid`, infinite outside its span.
fn interpolate(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let last = grid.len() - 1;
    if !(x >= grid[0] && x <= grid[last]) {
        return f64::INFINITY;
    }
    let i = grid.partition_point(|&g| g <= x).clamp(1, last) - 1;
    let f = (x - grid[i]) / (grid[i + 1] - grid[i]);
    if f <= SNAP {
        values[i]
    } else if f >= 1.0 - SNAP {
        values[i + 1]
    } else {
        let (a, b) = (values[i], values[i + 1]);
        if a.is_infinite() || b.is_infinite() {
            f64::INFINITY
        } else {
            a + f * (b - a)
        }
    }
}

/// `a` beats `b` at equal cost when it keeps the engine off, then when it
/// moves less battery power.
fn preferred(a: &Candidate, b: &Candidate) -> bool {
    match (a.decision.e_mode, b.decision.e_mode) {
        (EngineMode::EngineOff, EngineMode::EngineOn) => true,
        (EngineMode::EngineOn, EngineMode::EngineOff) => false,
        _ => a.decision.p_bat.abs() < b.decision.p_bat.abs(),
    }
}

/// Cheapest candidate from `soc` given the cost-to-go of the next stage.
fn best_control<'a>(
    soc: f64,
    controls: &'a [Candidate],
    grid: &[f64],
    next_value: &[f64],
    problem: &DpProblem,
) -> Option<(&'a Candidate, f64)> {
    let mut best: Option<(&Candidate, f64)> = None;
    for c in controls {
        let Some(s) = next_soc(soc, c, problem) else { continue };
        let cost = c.op.fuel_rate + interpolate(grid, next_value, s);
        if !cost.is_finite() {
            continue;
        }
        best = match best {
            Some((b, bc)) if cost > bc || (cost == bc && !preferred(c, b)) => Some((b, bc)),
            _ => Some((c, cost)),
        };
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpSolution {
    pub decisions: Vec<ControlDecision>,
    pub ops: Vec<EngineOp>,
    /// SOC at each of the `K + 1` stage boundaries.
    pub soc: Vec<f64>,
    /// Fuel rate per step, g/s (= g per 1 s step).
    pub fuel: Vec<f64>,
    /// Re-simulated fuel plus terminal cost, g.
    pub value: f64,
    /// Cost-to-go interpolated at `soc0`, g.
    pub value_interpolated: f64,
    pub soc_target: f64,
}

impl DpSolution {
    pub fn total_fuel(&self) -> f64 {
        self.fuel.iter().sum()
    }

    pub fn final_soc(&self) -> f64 {
        self.soc[self.soc.len() - 1]
    }
}

/// Cost-to-go and policy per stage, for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct DpTables {
    pub soc_grid: Vec<f64>,
    /// `values[k][i]`, `k = 0..=K`.
    pub values: Vec<Vec<f64>>,
    /// `policy[k][i]`, `k = 0..K`.
    pub policy: Vec<Vec<Option<ControlDecision>>>,
}

impl DpTables {
    /// `k,soc,value,e_mode,p_bat` rows; infeasible states have an empty policy.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let map = |e: csv::Error| Error::invalid(format!("csv: {e}"));
        w.write_record(["k", "soc", "value", "e_mode", "p_bat"]).map_err(map)?;
        for (k, vals) in self.values.iter().enumerate() {
            for (i, v) in vals.iter().enumerate() {
                let pol = self.policy.get(k).and_then(|p| p[i]);
                let (mode, p_bat) = match pol {
                    Some(d) => (d.e_mode.code().to_string(), d.p_bat.to_string()),
                    None => (String::new(), String::new()),
                };
                w.write_record([k.to_string(), self.soc_grid[i].to_string(), v.to_string(), mode, p_bat])
                    .map_err(map)?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

pub fn solve(problem: &DpProblem) -> Result<DpSolution> {
    solve_with_tables(problem).map(|(s, _)| s)
}

/// Backward value iteration on the SOC grid, then a forward pass from
/// `soc0` that re-optimizes each step against the stored cost-to-go.
pub fn solve_with_tables(problem: &DpProblem) -> Result<(DpSolution, DpTables)> {
    problem.validate()?;
    let k_max = problem.horizon();
    let grid = &problem.soc_grid;
    let controls: Vec<Vec<Candidate>> = (0..k_max).map(|k| step_controls(k, problem)).collect();

    let mut values = vec![Vec::new(); k_max + 1];
    let mut policy = vec![Vec::new(); k_max];
    values[k_max] = grid
        .iter()
        .map(|&s| {
            if s >= problem.soc_lo() && s <= problem.soc_hi() {
                problem.terminal.eval(s)
            } else {
                f64::INFINITY
            }
        })
        .collect();
    for k in (0..k_max).rev() {
        let (v, p): (Vec<f64>, Vec<Option<ControlDecision>>) = grid
            .iter()
            .map(|&s| match best_control(s, &controls[k], grid, &values[k + 1], problem) {
                Some((c, cost)) => (cost, Some(c.decision)),
                None => (f64::INFINITY, None),
            })
            .unzip();
        values[k] = v;
        policy[k] = p;
    }

    let value_interpolated = interpolate(grid, &values[0], problem.soc0);
    let mut soc = Vec::with_capacity(k_max + 1);
    let mut decisions = Vec::with_capacity(k_max);
    let mut ops = Vec::with_capacity(k_max);
    let mut fuel = Vec::with_capacity(k_max);
    let mut s = problem.soc0;
    soc.push(s);
    for k in 0..k_max {
        let (c, _) = best_control(s, &controls[k], grid, &values[k + 1], problem)
            .ok_or(Error::NoFeasiblePolicy { step: k, soc: s })?;
        s = next_soc(s, c, problem).expect("best control is feasible");
        soc.push(s);
        decisions.push(c.decision);
        ops.push(c.op);
        fuel.push(c.op.fuel_rate);
    }
    let value = fuel.iter().sum::<f64>() + problem.terminal.eval(s);
    let solution = DpSolution {
        decisions,
        ops,
        soc,
        fuel,
        value,
        value_interpolated,
        soc_target: problem.terminal.soc_target,
    };
    let tables = DpTables {
        soc_grid: grid.clone(),
        values,
        policy,
    };
    Ok((solution, tables))
}

pub fn charge_sustain_check(solution: &DpSolution, band: f64) -> bool {
    (solution.final_soc() - solution.soc_target).abs() <= band
}

/// Fuel plus terminal cost of an externally chosen fuel trace ending at
/// `final_soc`, comparable with `DpSolution::value`.
pub fn policy_cost(fuel: &[f64], final_soc: f64, terminal: &TerminalCost) -> f64 {
    fuel.iter().sum::<f64>() + terminal.eval(final_soc)
}
