use ecotherm::config::{ControllerKind, PlannerKind, Scenario};
use ecotherm::harness::{
    export_batch, export_run, read_json, run_batch, run_case, BatchSummary, RunSummary, CASE_COLUMNS,
    SERIES_COLUMNS,
};

/// Pins the default single run so unintended model changes show up.
#[test]
fn default_baseline_rule_run_is_pinned() {
    let s = Scenario::bundled().unwrap();
    assert_eq!((s.planner, s.controller), (PlannerKind::Baseline, ControllerKind::RuleBased));
    let r = run_case(&s).unwrap();
    let c = &r.summary;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
    assert!(close(c.energy_kwh, 1.4608457947239457), "{}", c.energy_kwh);
    assert!(close(c.fuel_g, 122.27388274039365), "{}", c.fuel_g);
    assert!(close(c.final_soc, 0.5997290805193851), "{}", c.final_soc);
    assert!(close(c.mean_t_cat, 268.41779981217707), "{}", c.mean_t_cat);
    assert!(close(c.tailpipe.hc, 0.13463806615464474), "{}", c.tailpipe.hc);
    assert_eq!((c.duration_s, c.stops, c.time_to_lightoff_s), (221.0, 2, 60.0));
    assert_eq!(r.series.len(), 222);
}

#[test]
fn run_export_round_trips() {
    let s = Scenario::bundled().unwrap();
    let r = run_case(&s).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let written = export_run(&r, &s.digests, tmp.path()).unwrap();
    let back: RunSummary = read_json(&tmp.path().join("summary.json")).unwrap();
    assert_eq!(back, written);
    assert_eq!(back.case, r.summary);
    let series = std::fs::read_to_string(tmp.path().join("series.csv")).unwrap();
    assert_eq!(series.lines().next().unwrap(), SERIES_COLUMNS.join(","));
    assert_eq!(series.lines().count(), 1 + r.series.len());
}

#[test]
fn batch_export_round_trips() {
    let s = Scenario::bundled().unwrap();
    let b = run_batch(&s, 3, 11, 50.0).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let written = export_batch(&b, tmp.path()).unwrap();
    let back: BatchSummary = read_json(&tmp.path().join("summary.json")).unwrap();
    assert_eq!(back, written);
    let cases = std::fs::read_to_string(tmp.path().join("cases.csv")).unwrap();
    assert_eq!(cases.lines().next().unwrap(), CASE_COLUMNS.join(","));
    assert_eq!(cases.lines().count(), 1 + 3 * 4);
}

#[test]
fn warm_catalyst_converts_above_98_percent_in_every_case() {
    let s = Scenario::bundled().unwrap();
    let b = run_batch(&s, s.batch.n, s.batch.seed, 300.0).unwrap();
    assert_eq!(b.failures(), 0);
    for outs in &b.outcomes {
        for r in outs.iter().flatten() {
            let eta = r.summary.conversion_efficiency;
            assert!(eta.as_array().iter().all(|&e| e > 0.98), "{eta:?}");
        }
    }
}

#[test]
fn seeds_change_the_batch_and_repeat_exactly() {
    let s = Scenario::bundled().unwrap();
    let a = run_batch(&s, 4, 1, 50.0).unwrap().summary();
    let b = run_batch(&s, 4, 1, 50.0).unwrap().summary();
    let c = run_batch(&s, 4, 2, 50.0).unwrap().summary();
    assert_eq!(a, b);
    assert_ne!(a.vehicles, c.vehicles);
}
