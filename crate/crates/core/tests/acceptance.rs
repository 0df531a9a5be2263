//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use ecotherm::config::ModelConfig;
use ecotherm::corridor::{evolve_queue, SignalTiming};
use ecotherm::dp::solve;
use ecotherm::harness::{
    export_batch, run_batch, BatchResult, ComboSummary, Combo, BASELINE_DP, BASELINE_RULE, COMBOS, ECO_DP,
    ECO_RULE,
};
use ecotherm::planner::trig_segment;
use ecotherm::thermal::{conversion_efficiency, coolant_net_heat, coolant_step, heat_split};
use ecotherm::{DrivingMode, Scenario, SpeedProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Batches {
    scenario: Scenario,
    cold: BatchResult,
    cold_time: Duration,
    warm: BatchResult,
}

impl Batches {
    fn run() -> Self {
        let scenario = Scenario::bundled().expect("bundled scenario");
        let (n, seed) = (scenario.batch.n, scenario.batch.seed);
        let start = Instant::now();
        let cold = run_batch(&scenario, n, seed, 50.0).expect("batch at 50 degC");
        let cold_time = start.elapsed();
        let warm = run_batch(&scenario, n, seed, 300.0).expect("batch at 300 degC");
        Batches { scenario, cold, cold_time, warm }
    }
}

fn combo(b: &BatchResult, c: Combo) -> ComboSummary {
    b.summary().combos.into_iter().find(|s| s.combo == c.label()).unwrap()
}

fn c1_dp_oracle() -> Outcome {
    let start = Instant::now();
    let (mut matched, mut feasible, mut worst) = (0, 0, 0.0f64);
    let problems = 40;
    for seed in 0..problems {
        let p = common::small_problem(1000 + seed);
        let oracle = common::brute_force(&p);
        match solve(&p) {
            Ok(s) if oracle.is_finite() => {
                feasible += 1;
                let rel = (s.value - oracle).abs() / oracle.abs().max(1e-9);
                worst = worst.max(rel);
                if rel <= 1e-6 {
                    matched += 1;
                }
            }
            Err(_) if oracle.is_infinite() => matched += 1,
            _ => {}
        }
    }
    let elapsed = start.elapsed();
    outcome(
        matched == problems && feasible >= 25 && elapsed < Duration::from_secs(10),
        format!(
            "{matched}/{problems} match ({feasible} feasible), worst rel err {worst:.2e}, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn c2_dominance(b: &Batches) -> Outcome {
    let n = b.cold.vehicles.len();
    let mut violations = 0;
    for i in 0..n {
        match (b.cold.case(i, ECO_DP), b.cold.case(i, ECO_RULE)) {
            (Some(dp), Some(rule)) if dp.summary.energy_kwh <= rule.summary.energy_kwh => {}
            _ => violations += 1,
        }
    }
    let saving = combo(&b.cold, ECO_DP).mean_saving_pct.unwrap_or(f64::NAN);
    let secs = b.cold_time.as_secs_f64();
    outcome(
        violations == 0 && saving > 0.0 && (5.0..=30.0).contains(&saving) && secs < 300.0,
        format!("{violations} violations, mean eco+dp saving {saving:.2}%, batch {secs:.1} s"),
    )
}

fn c3_charge_sustaining(b: &Batches) -> Outcome {
    let mut worst = 0.0f64;
    let mut missing = 0;
    for batch in [&b.cold, &b.warm] {
        for i in 0..batch.vehicles.len() {
            for c in COMBOS {
                match batch.case(i, c) {
                    Some(r) => worst = worst.max(r.summary.delta_soc.abs()),
                    None => missing += 1,
                }
            }
        }
    }
    outcome(
        missing == 0 && worst <= 0.05,
        format!("max |dSOC| {worst:.4}, {missing} failed cases"),
    )
}

fn c4_thermal_direction(b: &Batches) -> Outcome {
    let mean = |c| {
        let s = combo(&b.cold, c);
        (s.mean_t_cat.unwrap_or(f64::NAN), s.mean_t_cl.unwrap_or(f64::NAN))
    };
    let (cat_br, cl_br) = mean(BASELINE_RULE);
    let (cat_er, cl_er) = mean(ECO_RULE);
    let (cat_ed, _) = mean(ECO_DP);
    let eco_cooler = cat_er < cat_br && cl_er < cl_br;
    let dp_between = cat_er < cat_ed && cat_ed < cat_br;
    outcome(
        eco_cooler && dp_between,
        format!(
            "T_cat baseline+rule {cat_br:.1}, eco+rule {cat_er:.1}, eco+dp {cat_ed:.1}; \
             T_cl baseline+rule {cl_br:.2}, eco+rule {cl_er:.2}; eco cooler {eco_cooler}, dp between {dp_between}"
        ),
    )
}

fn c5_lightoff(b: &Batches) -> Outcome {
    let t = |c| combo(&b.cold, c).mean_time_to_lightoff_s.unwrap_or(f64::NAN);
    let (br, bd, er, ed) = (t(BASELINE_RULE), t(BASELINE_DP), t(ECO_RULE), t(ECO_DP));
    outcome(
        er > br && ed > bd,
        format!("mean light-off s: baseline+rule {br:.1}, eco+rule {er:.1}, baseline+dp {bd:.1}, eco+dp {ed:.1}"),
    )
}

fn indices(s: &ComboSummary) -> [f64; 3] {
    [&s.improvement_hc, &s.improvement_co, &s.improvement_nox].map(|i| i.mean_pct.unwrap_or(f64::NAN))
}

fn c6_cold_emissions(b: &Batches) -> Outcome {
    let [hc, co, nox] = indices(&combo(&b.cold, ECO_DP));
    outcome(
        co > 0.0 && nox > 0.0 && hc < co && hc < nox,
        format!("eco+dp at 50 degC: HC {hc:.2}%, CO {co:.2}%, NOx {nox:.2}%"),
    )
}

fn c7_warm_emissions(b: &Batches) -> Outcome {
    let [hc, co, nox] = indices(&combo(&b.warm, ECO_RULE));
    outcome(
        hc > 0.0 && co > 0.0 && nox > 0.0,
        format!("eco+rule at 300 degC: HC {hc:.2}%, CO {co:.2}%, NOx {nox:.2}%"),
    )
}

fn c8_identities(b: &Batches) -> Outcome {
    let m = &b.scenario.model;
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    // Coolant: stored heat equals the summed net heat flow.
    let mut worst_balance = 0.0f64;
    for _ in 0..4 {
        let t0 = rng.gen_range(20.0..90.0);
        let (mut t_cl, mut q_sum, mut q_abs) = (t0, 0.0, 0.0);
        for _ in 0..10_000 {
            let p_eng = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(1000.0..40000.0) };
            let fuel = if p_eng > 0.0 { rng.gen_range(0.2..3.0) } else { 0.0 };
            let heat = heat_split(fuel, &m.thermal, t_cl, 30.0, rng.gen_range(0.0..18.0));
            let q = coolant_net_heat(&heat, p_eng);
            q_sum += q;
            q_abs += q.abs();
            t_cl = coolant_step(t_cl, &heat, p_eng, &m.thermal);
        }
        let stored = m.thermal.engine_thermal_mass * (t_cl - t0);
        worst_balance = worst_balance.max((stored - q_sum).abs() / q_abs);
    }
    let balance_ok = worst_balance < 1e-12;

    // Catalyst: tailpipe never exceeds engine-out.
    let mut excess = 0;
    for batch in [&b.cold, &b.warm] {
        for outs in &batch.outcomes {
            for r in outs.iter().flatten() {
                excess += r
                    .series
                    .iter()
                    .filter(|s| s.hc_tp > s.hc_eo || s.co_tp > s.co_eo || s.nox_tp > s.nox_eo)
                    .count();
            }
        }
    }

    // Half-cosine ramp covers the mean-speed distance.
    let mut worst_trig = 0.0f64;
    for _ in 0..2000 {
        let (v0, vf, n) = (rng.gen_range(0.0..30.0), rng.gen_range(0.0..30.0), rng.gen_range(1..150usize));
        let v = trig_segment(v0, vf, n).unwrap();
        let d = SpeedProfile::new(0.0, v, vec![DrivingMode::Cruise; n + 1]).unwrap().distance();
        let expect = n as f64 * (v0 + vf) / 2.0;
        if expect > 0.0 {
            worst_trig = worst_trig.max((d - expect).abs() / expect);
        }
    }

    // Queue: vehicles in = vehicles out + vehicles waiting.
    let mut queue_breaks = 0;
    for _ in 0..200 {
        let green = rng.gen_range(10.0..60.0);
        let s = SignalTiming::new(90.0, rng.gen_range(0.0..90.0 - green), green, rng.gen_range(-50.0..50.0)).unwrap();
        let rates: Vec<f64> = (0..600).map(|_| rng.gen_range(0.0..2500.0)).collect();
        let trace = evolve_queue(&s, &rates, rng.gen_range(900.0..2400.0), 0.0, rates.len()).unwrap();
        queue_breaks += trace
            .iter()
            .filter(|q| q.queue_length != q.cumulative_arrivals - q.cumulative_departures)
            .count();
    }

    outcome(
        balance_ok && excess == 0 && worst_trig <= 1e-9 && queue_breaks == 0,
        format!(
            "coolant rel residual {worst_balance:.1e}, tailpipe>engine-out steps {excess}, \
             trig rel err {worst_trig:.1e}, queue conservation breaks {queue_breaks}"
        ),
    )
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let name = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((name, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn c9_determinism(b: &Batches) -> Outcome {
    let (n, seed) = (b.scenario.batch.n, b.scenario.batch.seed);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let again = pool.install(|| run_batch(&b.scenario, n, seed, 50.0)).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let (a, c) = (tmp.path().join("a"), tmp.path().join("b"));
    export_batch(&b.cold, &a).unwrap();
    export_batch(&again, &c).unwrap();
    let (fa, fc) = (files(&a), files(&c));
    outcome(
        !fa.is_empty() && fa == fc,
        format!(
            "seed {seed}, n {n}: {} files, default pool vs 3 threads identical {}",
            fa.len(),
            fa == fc
        ),
    )
}

fn c10_efficiency_pins() -> Outcome {
    let c = ModelConfig::bundled().unwrap().catalyst_curves;
    let half = |curve| conversion_efficiency(200.0, curve) / curve.eta_max;
    let (co, nox) = (half(&c.co), half(&c.nox));
    let hot = [&c.hc, &c.co, &c.nox].map(|curve| conversion_efficiency(300.0, curve));
    let pass = [co, nox].iter().all(|r| (0.495..=0.5).contains(r)) && hot.iter().all(|&e| e > 0.98);
    outcome(
        pass,
        format!(
            "eta(200)/eta_max CO {co:.4}, NOx {nox:.4}; eta(300) HC {:.4}, CO {:.4}, NOx {:.4}",
            hot[0], hot[1], hot[2]
        ),
    )
}

fn main() {
    // Honour `cargo test -- --list` and filters without running the batches.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let batches = Batches::run();
    let results = [
        ("1 dp matches exhaustive search", c1_dp_oracle()),
        ("2 dp dominance and saving", c2_dominance(&batches)),
        ("3 charge sustaining", c3_charge_sustaining(&batches)),
        ("4 thermal direction", c4_thermal_direction(&batches)),
        ("5 light-off delay", c5_lightoff(&batches)),
        ("6 emissions at 50 degC", c6_cold_emissions(&batches)),
        ("7 emissions at 300 degC", c7_warm_emissions(&batches)),
        ("8 conservation identities", c8_identities(&batches)),
        ("9 determinism", c9_determinism(&batches)),
        ("10 efficiency pins", c10_efficiency_pins()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("criterion {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
