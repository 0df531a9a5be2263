use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ecotherm::config::{ControllerKind, PlannerKind, Scenario};
use ecotherm::harness::{
    compare, export_batch, export_maps, export_run, read_json, run_batch, run_case, AnySummary, BatchSummary,
};

#[derive(Parser)]
#[command(name = "ecotherm", version, about = "Eco-driving, HEV energy management and catalyst warm-up simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one vehicle with the scenario's planner and controller.
    Run(RunArgs),
    /// Simulate n seeded vehicles under all four planner/controller pairs.
    Batch(BatchArgs),
    /// Percentage improvement of TEST over BASE for matching entries.
    Compare { base: PathBuf, test: PathBuf },
    /// Write the active fuel, emission, operating-line and efficiency tables.
    DumpMaps {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, default_value = "maps")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario file; the bundled default when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    controller: Option<Controller>,
    #[arg(long)]
    planner: Option<Planner>,
    /// Initial catalyst temperature, degC.
    #[arg(long)]
    tcat0: Option<f64>,
}

#[derive(Args)]
struct BatchArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    /// Initial catalyst temperature, degC.
    #[arg(long)]
    tcat0: Option<f64>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Controller {
    Rule,
    Dp,
}

#[derive(Clone, Copy, ValueEnum)]
enum Planner {
    Baseline,
    Eco,
}

/// Exit status with a message for stderr.
struct Failure {
    code: u8,
    message: String,
}

fn config_error(e: impl std::fmt::Display) -> Failure {
    Failure { code: 2, message: e.to_string() }
}

fn case_error(e: impl std::fmt::Display) -> Failure {
    Failure { code: 1, message: e.to_string() }
}

fn load(arg: &ScenarioArg) -> Result<Scenario, Failure> {
    match &arg.scenario {
        Some(p) => Scenario::load(p),
        None => Scenario::bundled(),
    }
    .map_err(config_error)
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut s = load(&args.scenario)?;
    if let Some(c) = args.controller {
        s.controller = match c {
            Controller::Rule => ControllerKind::RuleBased,
            Controller::Dp => ControllerKind::Dp,
        };
    }
    if let Some(p) = args.planner {
        s.planner = match p {
            Planner::Baseline => PlannerKind::Baseline,
            Planner::Eco => PlannerKind::Eco,
        };
    }
    if let Some(t) = args.tcat0 {
        s.initial.t_cat0 = t;
    }
    s.validate().map_err(config_error)?;
    let result = run_case(&s).map_err(case_error)?;
    let summary = export_run(&result, &s.digests, &args.out).map_err(case_error)?;
    let c = &summary.case;
    println!(
        "{}+{}: energy {:.4} kWh, fuel {:.1} g, dSOC {:+.4}, mean T_cat {:.1} degC, tailpipe HC {:.4} CO {:.4} NOx {:.4} g",
        c.planner, c.controller, c.energy_kwh, c.fuel_g, c.delta_soc, c.mean_t_cat, c.tailpipe.hc, c.tailpipe.co,
        c.tailpipe.nox
    );
    println!("wrote {}", args.out.display());
    Ok(())
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.digits$}"))
}

fn print_batch(summary: &BatchSummary) {
    println!(
        "seed {} n {} T_cat0 {} degC, {} failed cases",
        summary.seed, summary.n, summary.t_cat0, summary.failures
    );
    println!(
        "{:<14} {:>10} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "combo", "energy kWh", "saving %", "T_cat", "HC %", "CO %", "NOx %"
    );
    for c in &summary.combos {
        println!(
            "{:<14} {:>10} {:>9} {:>9} {:>9} {:>9} {:>9}",
            c.combo,
            fmt_opt(c.mean_energy_kwh, 4),
            fmt_opt(c.mean_saving_pct, 2),
            fmt_opt(c.mean_t_cat, 1),
            fmt_opt(c.improvement_hc.mean_pct, 2),
            fmt_opt(c.improvement_co.mean_pct, 2),
            fmt_opt(c.improvement_nox.mean_pct, 2),
        );
    }
}

fn batch(args: BatchArgs) -> Result<(), Failure> {
    let s = load(&args.scenario)?;
    let n = args.n.unwrap_or(s.batch.n);
    let seed = args.seed.unwrap_or(s.batch.seed);
    let t_cat0 = args.tcat0.unwrap_or(s.initial.t_cat0);
    if n == 0 {
        return Err(config_error("--n must be at least 1"));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = args.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(config_error)?;
    let result = pool.install(|| run_batch(&s, n, seed, t_cat0)).map_err(case_error)?;
    let summary = export_batch(&result, &args.out).map_err(case_error)?;
    print_batch(&summary);
    println!("wrote {}", args.out.display());
    for c in summary.cases.iter().filter(|c| c.error.is_some()) {
        eprintln!("vehicle {} {}: {}", c.index, c.combo, c.error.as_deref().unwrap_or_default());
    }
    if summary.failures > 0 {
        return Err(case_error(format!("{} of {} cases failed", summary.failures, summary.cases.len())));
    }
    Ok(())
}

fn compare_files(base: &Path, test: &Path) -> Result<(), Failure> {
    let b: AnySummary = read_json(base).map_err(config_error)?;
    let t: AnySummary = read_json(test).map_err(config_error)?;
    let rows = compare(&b, &t);
    if rows.is_empty() {
        return Err(config_error("no matching entries to compare"));
    }
    println!(
        "{:<28} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "entry", "energy %", "fuel %", "HC %", "CO %", "NOx %"
    );
    for r in rows {
        println!(
            "{:<28} {:>9} {:>9} {:>9} {:>9} {:>9}",
            r.label,
            fmt_opt(r.energy_pct, 2),
            fmt_opt(r.fuel_pct, 2),
            fmt_opt(r.hc_pct, 2),
            fmt_opt(r.co_pct, 2),
            fmt_opt(r.nox_pct, 2),
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Batch(a) => batch(a),
        Command::Compare { base, test } => compare_files(&base, &test),
        Command::DumpMaps { scenario, out } => load(&scenario).and_then(|s| {
            export_maps(&s.model, &out).map_err(case_error)?;
            println!("wrote {}", out.display());
            Ok(())
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
