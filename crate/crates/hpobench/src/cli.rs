//! Command-line entry points: run the benchmark grid, replay the analysis
//! from a results CSV, regenerate plots, print descriptive statistics, and
//! self-check the core invariants.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{dedup_by_index, describe, fit_apply_minmax, load_csv, synth_demand, CsvSchema};
use crate::error::{Error, Result};
use crate::features::{Matrix, SupervisedDataset, Variate};
use crate::metrics::{self, Clock};
use crate::optim::BudgetPolicy;
use crate::rng::derive_seed;
use crate::runner::{self, Algorithm, ConfigPatch};
use crate::space::SearchSpace;
use crate::{gbt, stats};

#[derive(Parser)]
#[command(
    name = "hpobench",
    version,
    about = "Benchmark of hyperparameter optimizers tuning a gradient-boosted-tree load forecaster"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment grid and write CSVs, reports, and plots
    Run(RunArgs),
    /// Recompute the summary table and significance reports from a results CSV
    Stats {
        /// Path to a results.csv produced by `run`
        results: PathBuf,
        /// Directory for the regenerated files (default: alongside the CSV)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Familywise significance level for the pairwise tests
        #[arg(long, default_value_t = runner::SIGNIFICANCE_ALPHA)]
        alpha: f64,
    },
    /// Regenerate the six performance plots from a results CSV
    Plot {
        /// Path to a results.csv produced by `run`
        results: PathBuf,
        /// Directory for the SVG files (default: alongside the CSV)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print per-column descriptive statistics in original units
    Describe(DescribeArgs),
    /// Exercise the built-in invariant checks and exit nonzero on failure
    Selftest,
}

#[derive(Args)]
struct RunArgs {
    /// Config file (flat TOML, schema_version = 1); flags below override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed every per-cell seed derives from
    #[arg(long)]
    seed: Option<u64>,
    /// Demand CSV with datetime, nat_demand, and exogenous columns
    #[arg(long)]
    data: Option<PathBuf>,
    /// Generate the synthetic demand series instead of loading a CSV
    #[arg(long)]
    synthetic: bool,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated sample sizes
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Comma-separated algorithms: random, cmaes, bayes, pso, ngopt
    #[arg(long, value_delimiter = ',')]
    algos: Option<Vec<String>>,
    /// Comma-separated predictor modes: univariate, multivariate
    #[arg(long, value_delimiter = ',')]
    variate: Option<Vec<String>>,
    /// Independent repeats per grid cell
    #[arg(long)]
    repeats: Option<usize>,
    /// Objective-evaluation budget per cell
    #[arg(long)]
    budget: Option<usize>,
    /// Non-improving trials tolerated before stopping (ignored by random search)
    #[arg(long)]
    patience: Option<usize>,
    /// Chronological test fraction in (0, 1)
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Lag window: past hours used as predictors
    #[arg(long)]
    lag: Option<usize>,
    /// Runtime clock: wall | counted
    #[arg(long)]
    clock: Option<String>,
}

#[derive(Args)]
struct DescribeArgs {
    /// Demand CSV to describe
    #[arg(long)]
    data: Option<PathBuf>,
    /// Describe the synthetic series instead
    #[arg(long)]
    synthetic: bool,
    /// Synthetic series length
    #[arg(long, default_value_t = 5000)]
    rows: usize,
    /// Seed for the synthetic series (same derivation as `run`)
    #[arg(long, default_value_t = runner::config::DEFAULT_SEED)]
    seed: u64,
}

/// Parses `argv` and dispatches. Returns the process exit code: 0 on
/// success, 1 for runtime failures (including failed grid cells), 2 for
/// unusable flags or config.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => do_run(args),
        Command::Stats { results, out, alpha } => do_stats(&results, out, alpha),
        Command::Plot { results, out } => do_plot(&results, out),
        Command::Describe(args) => do_describe(args),
        Command::Selftest => Ok(do_selftest()),
    };
    match outcome {
        Ok(code) => code,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            eprintln!("run with --help for usage");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn parse_variates(items: &[String]) -> Result<Vec<Variate>> {
    items.iter().map(|s| Variate::parse(s)).collect()
}

fn parse_algorithms(items: &[String]) -> Result<Vec<Algorithm>> {
    items.iter().map(|s| Algorithm::parse(s)).collect()
}

fn do_run(args: RunArgs) -> Result<i32> {
    let file = match &args.config {
        Some(path) => ConfigPatch::from_toml_file(path)?,
        None => ConfigPatch::default(),
    };
    let flags = ConfigPatch {
        seed: args.seed,
        data: args.data,
        synthetic: args.synthetic.then_some(true),
        out: args.out,
        sizes: args.sizes,
        variates: args.variate.as_deref().map(parse_variates).transpose()?,
        algorithms: args.algos.as_deref().map(parse_algorithms).transpose()?,
        lag_window: args.lag,
        max_trials: args.budget,
        patience: args.patience,
        test_fraction: args.test_fraction,
        repeats: args.repeats,
        clock: args.clock.as_deref().map(Clock::parse).transpose()?,
    };
    let cfg = flags.merged_over(file).resolve()?;
    let ledger = runner::run_experiment(&cfg)?;
    let paths = runner::write_outputs(&ledger)?;
    let failed = ledger.failed_count();
    println!("{} cells completed, {} failed", ledger.cells.len() - failed, failed);
    println!("results: {}", paths.results.display());
    for (label, written) in [("reports", &paths.stats), ("plots", &paths.plots)] {
        if !written.is_empty() {
            println!("{label}: {} files in {}", written.len(), cfg.out_dir.display());
        }
    }
    Ok(if failed > 0 { 1 } else { 0 })
}

fn sibling_dir(results: &Path, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| {
        let parent = results.parent().unwrap_or(Path::new("."));
        if parent.as_os_str().is_empty() {
            PathBuf::from(".")
        } else {
            parent.to_path_buf()
        }
    })
}

fn load_records(results: &Path) -> Result<Vec<metrics::MetricRecord>> {
    let rows = runner::read_results_csv(results)?;
    let records = runner::records_from_rows(&rows);
    if records.is_empty() {
        return Err(Error::Run(format!("{} has no completed rows", results.display())));
    }
    Ok(records)
}

fn do_stats(results: &Path, out: Option<PathBuf>, alpha: f64) -> Result<i32> {
    let records = load_records(results)?;
    let dir = sibling_dir(results, out);
    let (summary, reports) = runner::write_analysis(&records, &dir, alpha)?;
    println!("summary: {}", summary.display());
    for path in reports {
        println!("report: {}", path.display());
    }
    Ok(0)
}

fn do_plot(results: &Path, out: Option<PathBuf>) -> Result<i32> {
    let records = load_records(results)?;
    let dir = sibling_dir(results, out);
    for path in crate::svgplot::emit_plots(&records, &dir)? {
        println!("plot: {}", path.display());
    }
    Ok(0)
}

fn do_describe(args: DescribeArgs) -> Result<i32> {
    let frame = match (&args.data, args.synthetic) {
        (Some(_), true) | (None, false) => {
            return Err(Error::Config(
                "describe needs exactly one of --data or --synthetic".into(),
            ))
        }
        (Some(path), false) => dedup_by_index(&load_csv(path, &CsvSchema::default())?),
        (None, true) => synth_demand(args.rows, derive_seed(args.seed, "synthetic-data"))?,
    };
    let table = describe(&frame)?;
    println!("column,min,max,mean,sd");
    for col in &table.columns {
        println!(
            "{},{},{},{},{}",
            col.name,
            runner::fmt_f64(col.min),
            runner::fmt_f64(col.max),
            runner::fmt_f64(col.mean),
            runner::fmt_f64(col.sd)
        );
    }
    Ok(0)
}

type Check = (&'static str, fn() -> std::result::Result<(), String>);

fn do_selftest() -> i32 {
    let checks: [Check; 8] = [
        ("metric identities", check_metric_identities),
        ("rank-test fixtures", check_rank_fixtures),
        ("tree leaf fixture", check_leaf_fixture),
        ("grid round trip", check_grid_round_trip),
        ("early-stop law", check_early_stop_law),
        ("random budget law", check_random_budget),
        ("scaling round trip", check_scaling_round_trip),
        ("run determinism", check_run_determinism),
    ];
    let mut failures = 0;
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("selftest {name}: ok"),
            Err(msg) => {
                failures += 1;
                println!("selftest {name}: FAILED — {msg}");
            }
        }
    }
    if failures > 0 {
        println!("selftest: {failures} of {} checks failed", 8);
        1
    } else {
        println!("selftest: all checks passed");
        0
    }
}

fn ensure(cond: bool, msg: &str) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.to_string())
    }
}

fn check_metric_identities() -> std::result::Result<(), String> {
    let y = [3.0, 5.0, 9.0];
    let mape = metrics::mape(&y, &y).map_err(|e| e.to_string())?;
    ensure(mape == 0.0, "perfect predictions must give MAPE 0")?;
    let r2 = metrics::r_squared(&y, &y).map_err(|e| e.to_string())?;
    ensure(r2 == 1.0, "perfect predictions must give R² 1")?;
    let mean = [17.0 / 3.0; 3];
    let r2_mean = metrics::r_squared(&y, &mean).map_err(|e| e.to_string())?;
    ensure(r2_mean.abs() < 1e-12, "mean predictor must give R² 0")?;
    let r2_bad = metrics::r_squared(&[1.0, 2.0, 3.0], &[5.0, 0.0, 5.0]).map_err(|e| e.to_string())?;
    ensure((r2_bad - (-11.0)).abs() < 1e-12, "R² must go negative for bad fits")
}

fn check_rank_fixtures() -> std::result::Result<(), String> {
    let groups =
        vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]];
    let report = stats::kruskal_wallis(&groups).map_err(|e| e.to_string())?;
    ensure((report.h - 7.2).abs() < 1e-9, "tie-free 3x3 ladder must give H = 7.2")?;
    ensure((report.p_value - 0.0273).abs() < 1e-3, "H = 7.2 at df 2 must give p near 0.0273")?;
    let pairwise = stats::dunn_bonferroni(&groups, 0.05).map_err(|e| e.to_string())?;
    let cell = pairwise.get(0, 2).ok_or("missing pairwise cell")?;
    ensure((cell.z.abs() - 2.683).abs() < 1e-3, "extreme pair must give |z| near 2.683")?;
    ensure((cell.p_adjusted - 0.0219).abs() < 1e-3, "adjusted p must be near 0.0219")
}

fn check_leaf_fixture() -> std::result::Result<(), String> {
    let mut x = Matrix::zeros(4, 1);
    x.set(2, 0, 1.0);
    x.set(3, 0, 1.0);
    let ds = SupervisedDataset {
        x,
        y: vec![-5.0, -5.0, 5.0, 5.0],
        feature_names: vec!["x0".into()],
    };
    let hp = crate::space::HyperParams {
        max_depth: 1,
        learning_rate: 1.0,
        n_estimators: 1,
        subsample: 1.0,
        colsample_bytree: 1.0,
        min_child_weight: 1.0,
    };
    let model = gbt::fit(&ds, &hp, 0).map_err(|e| e.to_string())?;
    let pred = gbt::predict(&model, &ds.x).map_err(|e| e.to_string())?;
    ensure(pred[0] == -10.0 / 3.0, "left leaf must equal -10/3 exactly")?;
    ensure(pred[3] == 10.0 / 3.0, "right leaf must equal +10/3 exactly")
}

fn check_grid_round_trip() -> std::result::Result<(), String> {
    let space = SearchSpace::default();
    let sizes = space.grid_sizes();
    let mut rng = crate::rng::seeded_rng(11);
    use rand::Rng;
    for _ in 0..100 {
        let idx: [usize; 6] = std::array::from_fn(|d| rng.gen_range(0..sizes[d]));
        let direct = space.at_indices(idx);
        let point = crate::space::encode_indices(idx, &space);
        let decoded = crate::space::decode(&point, &space);
        if decoded != direct {
            return Err(format!("decode(encode({idx:?})) diverged: {decoded:?} vs {direct:?}"));
        }
        if !space.contains(&direct) {
            return Err(format!("grid member not recognized: {direct:?}"));
        }
    }
    Ok(())
}

fn check_early_stop_law() -> std::result::Result<(), String> {
    let space = SearchSpace::default();
    let budget = BudgetPolicy { max_trials: 30, patience: 5 };
    let mut flat = |_: &crate::space::HyperParams| Ok(1.0);
    let result = crate::optim::run_cmaes(&mut flat, &space, &budget, 3).map_err(|e| e.to_string())?;
    ensure(result.stopped_early, "flat objective must trip the patience stop")?;
    ensure(
        result.history.len() == 6,
        &format!("flat objective with patience 5 must stop after 6 trials, got {}", result.history.len()),
    )
}

fn check_random_budget() -> std::result::Result<(), String> {
    let space = SearchSpace::default();
    let budget = BudgetPolicy { max_trials: 7, patience: 1 };
    let mut flat = |_: &crate::space::HyperParams| Ok(1.0);
    let result =
        crate::optim::run_random_search(&mut flat, &space, &budget, 3).map_err(|e| e.to_string())?;
    ensure(!result.stopped_early, "random search must ignore patience")?;
    ensure(
        result.history.len() == 7,
        &format!("random search must spend the whole budget, got {} trials", result.history.len()),
    )
}

fn check_scaling_round_trip() -> std::result::Result<(), String> {
    let frame = synth_demand(100, 5).map_err(|e| e.to_string())?;
    let (scaled, params) = fit_apply_minmax(&frame).map_err(|e| e.to_string())?;
    for (orig, s) in frame.target.iter().zip(&scaled.target) {
        if (params.inverse_target(*s) - orig).abs() > 1e-9 {
            return Err("inverse transform must reconstruct original demand".into());
        }
    }
    ensure(
        scaled.target.iter().all(|&v| (0.0..=1.0).contains(&v)),
        "scaled target must lie in [0, 1]",
    )
}

fn check_run_determinism() -> std::result::Result<(), String> {
    let cfg = runner::ExperimentConfig {
        sizes: vec![60],
        algorithms: vec![Algorithm::Random],
        budget: BudgetPolicy { max_trials: 2, patience: 2 },
        clock: Clock::Counted,
        ..runner::ExperimentConfig::default()
    };
    let a = runner::run_experiment(&cfg).map_err(|e| e.to_string())?;
    let b = runner::run_experiment(&cfg).map_err(|e| e.to_string())?;
    ensure(a.failed_count() == 0, "tiny run must complete")?;
    ensure(a.records() == b.records(), "same master seed must reproduce the ledger exactly")
}
