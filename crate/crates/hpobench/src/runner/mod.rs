//! Grid orchestration: expands a config into (algorithm, variate, size,
//! repeat) cells, runs each cell end to end — sample, lag features, split,
//! tune, refit, score — and serializes the ledger as CSVs, significance
//! reports, and plots. Cells run in parallel up to `HPOBENCH_WORKERS`; the
//! ledger keeps config order regardless of completion order.

pub mod config;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::data::{
    dedup_by_index, fit_apply_minmax, load_csv, synth_demand, take_sample, CsvSchema,
    TimeSeriesFrame,
};
use crate::error::{Error, Result};
use crate::features::{chrono_split, make_supervised, Variate};
use crate::gbt;
use crate::metrics::{mape, r_squared, timed, with_clock, MetricRecord};
use crate::objective::{EvalMode, ObjectiveSpec};
use crate::optim::{
    run_bayesian, run_cmaes, run_ngopt, run_pso, run_random_search, BudgetPolicy,
    OptimizationResult,
};
use crate::rng::derive_seed;
use crate::space::{HyperParams, SearchSpace};
use crate::stats::{
    dunn_bonferroni, format_kruskal_wallis, format_pairwise, kruskal_wallis, KruskalWallisReport,
    PairwiseMatrix,
};
use crate::svgplot::{algorithm_rank, emit_plots, PlotMetric};

pub use config::{Algorithm, ConfigPatch, DataSource, ExperimentConfig};

/// One grid cell, fully determined before any work happens.
#[derive(Debug, Clone)]
pub struct CellSpec {
    pub run_id: String,
    pub algorithm: Algorithm,
    pub variate: Variate,
    pub sample_size: usize,
    pub rep: usize,
    /// Derived from the master seed and the cell identity; every random
    /// choice inside the cell flows from this value.
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum CellOutcome {
    Completed {
        record: MetricRecord,
        best: HyperParams,
        optimization: OptimizationResult,
    },
    Failed {
        message: String,
    },
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub spec: CellSpec,
    pub outcome: CellOutcome,
}

/// Everything a run produced, in config order.
#[derive(Debug, Clone)]
pub struct RunLedger {
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
}

impl RunLedger {
    /// Metric records of the completed cells, in ledger order.
    pub fn records(&self) -> Vec<MetricRecord> {
        self.cells
            .iter()
            .filter_map(|c| match &c.outcome {
                CellOutcome::Completed { record, .. } => Some(record.clone()),
                CellOutcome::Failed { .. } => None,
            })
            .collect()
    }

    pub fn failed_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c.outcome, CellOutcome::Failed { .. }))
            .count()
    }
}

/// Expands the config grid in deterministic order: sizes, then variates,
/// then algorithms, then repeats.
pub fn cell_specs(cfg: &ExperimentConfig) -> Vec<CellSpec> {
    let mut specs = Vec::new();
    for &size in &cfg.sizes {
        for &variate in &cfg.variates {
            for &algorithm in &cfg.algorithms {
                for rep in 0..cfg.repeats {
                    let run_id = format!("{algorithm}-{variate}-{size}-r{rep}");
                    let seed = derive_seed(cfg.master_seed, &run_id);
                    specs.push(CellSpec {
                        run_id,
                        algorithm,
                        variate,
                        sample_size: size,
                        rep,
                        seed,
                    });
                }
            }
        }
    }
    specs
}

/// Loads (or generates) the demand series, deduplicates, and fits the 0-1
/// scaling once over the whole frame. Every cell samples from this frame.
pub fn load_frame(cfg: &ExperimentConfig) -> Result<TimeSeriesFrame> {
    let raw = match &cfg.source {
        DataSource::Csv(path) => dedup_by_index(&load_csv(path, &CsvSchema::default())?),
        DataSource::Synthetic => {
            let n = *cfg.sizes.last().expect("validated: sizes nonempty");
            synth_demand(n, derive_seed(cfg.master_seed, "synthetic-data"))?
        }
    };
    let (scaled, _) = fit_apply_minmax(&raw)?;
    Ok(scaled)
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var("HPOBENCH_WORKERS") {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| {
                Error::Config(format!("HPOBENCH_WORKERS must be a positive integer, got {raw:?}"))
            })?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::Run(format!("worker pool: {e}")))
}

pub fn run_algorithm(
    algorithm: Algorithm,
    objective: &mut dyn FnMut(&HyperParams) -> Result<f64>,
    space: &SearchSpace,
    budget: &BudgetPolicy,
    seed: u64,
) -> Result<OptimizationResult> {
    match algorithm {
        Algorithm::Random => run_random_search(objective, space, budget, seed),
        Algorithm::Cmaes => run_cmaes(objective, space, budget, seed),
        Algorithm::Bayes => run_bayesian(objective, space, budget, seed),
        Algorithm::Pso => run_pso(objective, space, budget, seed),
        Algorithm::Ngopt => run_ngopt(objective, space, budget, seed),
    }
}

fn cell_body(
    cfg: &ExperimentConfig,
    frame: &TimeSeriesFrame,
    spec: &CellSpec,
) -> Result<(MetricRecord, HyperParams, OptimizationResult)> {
    let sample = take_sample(frame, spec.sample_size)?;
    let lag_cfg = spec.variate.lag_config(cfg.lag_window);
    let ds = make_supervised(&sample, &lag_cfg)?;
    let split = chrono_split(&ds, cfg.test_fraction)?;

    // Random search has no model to guide it, so it affords the dearer
    // 5-fold objective; the guided optimizers use the cheaper holdout.
    let mode = match spec.algorithm {
        Algorithm::Random => EvalMode::Cv5,
        _ => EvalMode::Holdout,
    };
    let objective =
        ObjectiveSpec::new(split.train.clone(), mode, derive_seed(spec.seed, "objective"));
    let space = SearchSpace::default();
    let mut objective_fn = |hp: &HyperParams| objective.eval(hp);
    let (outcome, elapsed) = timed(|| {
        run_algorithm(
            spec.algorithm,
            &mut objective_fn,
            &space,
            &cfg.budget,
            derive_seed(spec.seed, "optimizer"),
        )
    });
    let optimization = outcome?;
    let best = optimization.best_params.clone();

    let model = gbt::fit(&split.train, &best, derive_seed(spec.seed, "final_fit"))?;
    let predicted_scaled = gbt::predict(&model, &split.test.x)?;
    let scaling = frame
        .scaling
        .as_ref()
        .ok_or_else(|| Error::Run("frame is missing scaling parameters".into()))?;
    let actual: Vec<f64> = split.test.y.iter().map(|&v| scaling.inverse_target(v)).collect();
    let predicted: Vec<f64> =
        predicted_scaled.iter().map(|&v| scaling.inverse_target(v)).collect();

    let record = MetricRecord {
        algorithm: spec.algorithm.as_str().to_string(),
        variate: spec.variate,
        sample_size: spec.sample_size,
        mape: mape(&actual, &predicted)?,
        r2: r_squared(&actual, &predicted)?,
        runtime_seconds: elapsed,
    };
    Ok((record, best, optimization))
}

fn run_cell(cfg: &ExperimentConfig, frame: &TimeSeriesFrame, spec: CellSpec) -> CellResult {
    let outcome = with_clock(cfg.clock, || cell_body(cfg, frame, &spec));
    match outcome {
        Ok((record, best, optimization)) => CellResult {
            spec,
            outcome: CellOutcome::Completed { record, best, optimization },
        },
        Err(e) => {
            log::warn!("cell {} failed: {e}", spec.run_id);
            CellResult { spec, outcome: CellOutcome::Failed { message: e.to_string() } }
        }
    }
}

/// Runs the whole grid. Failing cells are recorded and skipped; the ledger
/// ends up with one entry per cell either way.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunLedger> {
    cfg.validate()?;
    let frame = load_frame(cfg)?;
    let specs = cell_specs(cfg);
    let pool = worker_pool()?;
    let cells: Vec<CellResult> =
        pool.install(|| specs.into_par_iter().map(|spec| run_cell(cfg, &frame, spec)).collect());
    Ok(RunLedger { config: cfg.clone(), cells })
}

/// Shortest decimal form that parses back to the same bit pattern, with NaN
/// normalized to lowercase so the CSVs stay `from_str`-friendly.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::ParseRow { line, msg: format!("bad float {field:?}") })
}

pub const RESULTS_HEADER: [&str; 15] = [
    "run_id",
    "algorithm",
    "variate",
    "sample_size",
    "seed",
    "mape",
    "r2",
    "runtime_s",
    "best_max_depth",
    "best_learning_rate",
    "best_n_estimators",
    "best_subsample",
    "best_colsample_bytree",
    "best_min_child_weight",
    "status",
];

pub const TRIALS_HEADER: [&str; 13] = [
    "run_id",
    "algorithm",
    "variate",
    "sample_size",
    "trial",
    "objective",
    "elapsed_s",
    "max_depth",
    "learning_rate",
    "n_estimators",
    "subsample",
    "colsample_bytree",
    "min_child_weight",
];

pub fn write_results_csv(ledger: &RunLedger, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULTS_HEADER)?;
    for cell in &ledger.cells {
        let s = &cell.spec;
        let head = [
            s.run_id.clone(),
            s.algorithm.as_str().to_string(),
            s.variate.as_str().to_string(),
            s.sample_size.to_string(),
            s.seed.to_string(),
        ];
        let tail: [String; 10] = match &cell.outcome {
            CellOutcome::Completed { record, best, .. } => [
                fmt_f64(record.mape),
                fmt_f64(record.r2),
                fmt_f64(record.runtime_seconds),
                best.max_depth.to_string(),
                fmt_f64(best.learning_rate),
                best.n_estimators.to_string(),
                fmt_f64(best.subsample),
                fmt_f64(best.colsample_bytree),
                fmt_f64(best.min_child_weight),
                "ok".to_string(),
            ],
            CellOutcome::Failed { .. } => {
                let mut t: [String; 10] = std::array::from_fn(|_| "nan".to_string());
                t[9] = "failed".to_string();
                t
            }
        };
        w.write_record(head.iter().chain(tail.iter()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trials_csv(ledger: &RunLedger, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRIALS_HEADER)?;
    for cell in &ledger.cells {
        let CellOutcome::Completed { optimization, .. } = &cell.outcome else { continue };
        let s = &cell.spec;
        for trial in &optimization.history {
            let hp = &trial.params;
            w.write_record([
                s.run_id.clone(),
                optimization.algorithm.clone(),
                s.variate.as_str().to_string(),
                s.sample_size.to_string(),
                trial.index.to_string(),
                fmt_f64(trial.objective),
                fmt_f64(trial.elapsed),
                hp.max_depth.to_string(),
                fmt_f64(hp.learning_rate),
                hp.n_estimators.to_string(),
                fmt_f64(hp.subsample),
                fmt_f64(hp.colsample_bytree),
                fmt_f64(hp.min_child_weight),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One results-CSV row, as written by [`write_results_csv`].
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub run_id: String,
    pub algorithm: String,
    pub variate: Variate,
    pub sample_size: usize,
    pub seed: u64,
    pub mape: f64,
    pub r2: f64,
    pub runtime_s: f64,
    pub best: Option<HyperParams>,
    pub status: String,
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if !headers.iter().eq(RESULTS_HEADER) {
        return Err(Error::Schema(format!(
            "unexpected results header {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let rec = record?;
        let line = i + 2;
        if rec.len() != RESULTS_HEADER.len() {
            return Err(Error::ParseRow { line, msg: format!("expected 15 fields, got {}", rec.len()) });
        }
        let field = |idx: usize| rec.get(idx).unwrap_or("");
        let status = field(14).to_string();
        let best = if status == "ok" {
            Some(HyperParams {
                max_depth: parse_f64(field(8), line)? as u32,
                learning_rate: parse_f64(field(9), line)?,
                n_estimators: parse_f64(field(10), line)? as u32,
                subsample: parse_f64(field(11), line)?,
                colsample_bytree: parse_f64(field(12), line)?,
                min_child_weight: parse_f64(field(13), line)?,
            })
        } else {
            None
        };
        rows.push(ResultRow {
            run_id: field(0).to_string(),
            algorithm: field(1).to_string(),
            variate: Variate::parse(field(2))?,
            sample_size: field(3)
                .parse()
                .map_err(|_| Error::ParseRow { line, msg: format!("bad size {:?}", field(3)) })?,
            seed: field(4)
                .parse()
                .map_err(|_| Error::ParseRow { line, msg: format!("bad seed {:?}", field(4)) })?,
            mape: parse_f64(field(5), line)?,
            r2: parse_f64(field(6), line)?,
            runtime_s: parse_f64(field(7), line)?,
            best,
            status,
        });
    }
    Ok(rows)
}

/// The completed rows as metric records, in file order.
pub fn records_from_rows(rows: &[ResultRow]) -> Vec<MetricRecord> {
    rows.iter()
        .filter(|r| r.status == "ok")
        .map(|r| MetricRecord {
            algorithm: r.algorithm.clone(),
            variate: r.variate,
            sample_size: r.sample_size,
            mape: r.mape,
            r2: r.r2,
            runtime_seconds: r.runtime_s,
        })
        .collect()
}

fn ordered_algorithms(records: &[MetricRecord], variate: Variate) -> Vec<String> {
    let mut names: Vec<String> = records
        .iter()
        .filter(|r| r.variate == variate)
        .map(|r| r.algorithm.clone())
        .collect();
    names.sort_by(|a, b| algorithm_rank(a).cmp(&algorithm_rank(b)));
    names.dedup();
    names
}

fn metric_values(
    records: &[MetricRecord],
    variate: Variate,
    algorithm: &str,
    metric: PlotMetric,
) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.variate == variate && r.algorithm == algorithm)
        .map(|r| metric.extract(r))
        .collect()
}

/// Min/max/mean/sd of one metric for one algorithm in one predictor mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: String,
    pub variate: Variate,
    pub metric: PlotMetric,
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Per-algorithm spread of each metric, per predictor mode. The sd uses the
/// n−1 denominator; a single record yields sd 0.
pub fn summarize(records: &[MetricRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::Stats("nothing to summarize".into()));
    }
    let mut rows = Vec::new();
    for &variate in &Variate::ALL {
        for algorithm in ordered_algorithms(records, variate) {
            for &metric in &PlotMetric::ALL {
                let values = metric_values(records, variate, &algorithm, metric);
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                let sd = if values.len() < 2 {
                    0.0
                } else {
                    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                        / (values.len() - 1) as f64)
                        .sqrt()
                };
                rows.push(SummaryRow {
                    algorithm: algorithm.clone(),
                    variate,
                    metric,
                    count: values.len(),
                    min: values.iter().copied().fold(f64::INFINITY, f64::min),
                    max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    mean,
                    sd,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["algorithm", "variate", "metric", "count", "min", "max", "mean", "sd"])?;
    for r in rows {
        w.write_record([
            r.algorithm.clone(),
            r.variate.as_str().to_string(),
            r.metric.as_str().to_string(),
            r.count.to_string(),
            fmt_f64(r.min),
            fmt_f64(r.max),
            fmt_f64(r.mean),
            fmt_f64(r.sd),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Omnibus and pairwise significance results for one metric in one mode.
#[derive(Debug, Clone)]
pub struct StatsCell {
    pub variate: Variate,
    pub metric: PlotMetric,
    pub labels: Vec<String>,
    pub report: KruskalWallisReport,
    pub pairwise: PairwiseMatrix,
}

fn stats_cell(
    records: &[MetricRecord],
    variate: Variate,
    metric: PlotMetric,
    alpha: f64,
) -> Result<StatsCell> {
    let labels = ordered_algorithms(records, variate);
    let groups: Vec<Vec<f64>> =
        labels.iter().map(|a| metric_values(records, variate, a, metric)).collect();
    if labels.len() < 2 || groups.iter().any(|g| g.len() < 2) {
        return Err(Error::Stats(format!(
            "{} ({variate}): need at least 2 algorithms with at least 2 records each",
            metric.as_str()
        )));
    }
    let report = kruskal_wallis(&groups)?;
    let pairwise = dunn_bonferroni(&groups, alpha)?;
    Ok(StatsCell { variate, metric, labels, report, pairwise })
}

/// Runs the rank tests for every metric in every predictor mode present.
/// Each entry carries its own `Result` so one degenerate metric cannot
/// abort the rest.
pub fn run_stats(
    records: &[MetricRecord],
    alpha: f64,
) -> Vec<(Variate, PlotMetric, Result<StatsCell>)> {
    let mut out = Vec::new();
    for &variate in &Variate::ALL {
        if !records.iter().any(|r| r.variate == variate) {
            continue;
        }
        for &metric in &PlotMetric::ALL {
            out.push((variate, metric, stats_cell(records, variate, metric, alpha)));
        }
    }
    out
}

pub fn render_stats(cell: &StatsCell) -> String {
    format!(
        "{}\n{}",
        format_kruskal_wallis(&cell.report, &cell.labels),
        format_pairwise(&cell.pairwise, &cell.labels)
    )
}

pub fn stats_file_name(metric: PlotMetric, variate: Variate) -> String {
    format!("stats_{}_{}.txt", metric.as_str(), variate.as_str())
}

/// Writes summary.csv and the per-metric significance reports; shared by
/// the full run and the CSV-replay path so both produce identical bytes.
pub fn write_analysis(
    records: &[MetricRecord],
    dir: &Path,
    alpha: f64,
) -> Result<(PathBuf, Vec<PathBuf>)> {
    std::fs::create_dir_all(dir)?;
    let summary_path = dir.join("summary.csv");
    write_summary_csv(&summarize(records)?, &summary_path)?;
    let mut stats_paths = Vec::new();
    for (variate, metric, outcome) in run_stats(records, alpha) {
        match outcome {
            Ok(cell) => {
                let path = dir.join(stats_file_name(metric, variate));
                std::fs::write(&path, render_stats(&cell))?;
                stats_paths.push(path);
            }
            Err(e) => log::warn!("skipping significance report: {e}"),
        }
    }
    Ok((summary_path, stats_paths))
}

#[derive(Debug, Clone)]
pub struct OutputPaths {
    pub results: PathBuf,
    pub trials: PathBuf,
    pub snapshot: PathBuf,
    pub summary: Option<PathBuf>,
    pub stats: Vec<PathBuf>,
    pub plots: Vec<PathBuf>,
}

pub const SIGNIFICANCE_ALPHA: f64 = 0.05;

/// Serializes a run: raw results and trials, the config snapshot, and — when
/// at least one cell completed — the summary, significance reports, and
/// plots.
pub fn write_outputs(ledger: &RunLedger) -> Result<OutputPaths> {
    let dir = &ledger.config.out_dir;
    std::fs::create_dir_all(dir)?;
    let results = dir.join("results.csv");
    write_results_csv(ledger, &results)?;
    let trials = dir.join("trials.csv");
    write_trials_csv(ledger, &trials)?;
    let snapshot = dir.join("config_snapshot.toml");
    std::fs::write(&snapshot, ledger.config.snapshot())?;

    let records = ledger.records();
    if records.is_empty() {
        log::warn!("no completed cells; skipping summary, stats, and plots");
        return Ok(OutputPaths {
            results,
            trials,
            snapshot,
            summary: None,
            stats: Vec::new(),
            plots: Vec::new(),
        });
    }
    let (summary, stats) = write_analysis(&records, dir, SIGNIFICANCE_ALPHA)?;
    let plots = emit_plots(&records, dir)?;
    Ok(OutputPaths { results, trials, snapshot, summary: Some(summary), stats, plots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Clock;

    fn record(algorithm: &str, variate: Variate, size: usize, mape: f64) -> MetricRecord {
        MetricRecord {
            algorithm: algorithm.into(),
            variate,
            sample_size: size,
            mape,
            r2: 0.5,
            runtime_seconds: 1.0,
        }
    }

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            sizes: vec![60],
            algorithms: vec![Algorithm::Random],
            budget: BudgetPolicy { max_trials: 2, patience: 2 },
            clock: Clock::Counted,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn cell_specs_cover_the_grid_in_config_order() {
        let cfg = ExperimentConfig {
            sizes: vec![1000, 2000],
            variates: vec![Variate::Univariate],
            algorithms: vec![Algorithm::Random, Algorithm::Pso],
            ..ExperimentConfig::default()
        };
        let specs = cell_specs(&cfg);
        assert_eq!(specs.len(), 4);
        assert_eq!(specs[0].run_id, "random-univariate-1000-r0");
        assert_eq!(specs[1].run_id, "pso-univariate-1000-r0");
        assert_eq!(specs[2].run_id, "random-univariate-2000-r0");
        assert_eq!(specs[3].run_id, "pso-univariate-2000-r0");
        let mut seeds: Vec<u64> = specs.iter().map(|s| s.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 4, "cell seeds must be distinct");
    }

    #[test]
    fn repeats_multiply_cells_and_change_seeds() {
        let cfg = ExperimentConfig {
            sizes: vec![1000],
            algorithms: vec![Algorithm::Random],
            repeats: 3,
            ..ExperimentConfig::default()
        };
        let specs = cell_specs(&cfg);
        assert_eq!(specs.len(), 3);
        assert_eq!(specs[2].run_id, "random-univariate-1000-r2");
        assert_ne!(specs[0].seed, specs[1].seed);
    }

    #[test]
    fn summarize_matches_hand_spreads() {
        let records = vec![
            record("random", Variate::Univariate, 1000, 0.1),
            record("random", Variate::Univariate, 2000, 0.2),
        ];
        let rows = summarize(&records).unwrap();
        let mape_row = rows
            .iter()
            .find(|r| r.metric == PlotMetric::Mape && r.algorithm == "random")
            .unwrap();
        assert_eq!(mape_row.count, 2);
        assert!((mape_row.mean - 0.15).abs() < 1e-15);
        assert_eq!(mape_row.min, 0.1);
        assert_eq!(mape_row.max, 0.2);
        let hand_sd = (2.0 * 0.05f64.powi(2)).sqrt();
        assert!((mape_row.sd - hand_sd).abs() < 1e-12);
    }

    #[test]
    fn summarize_single_record_has_zero_sd() {
        let rows = summarize(&[record("pso", Variate::Univariate, 1000, 0.3)]).unwrap();
        for row in &rows {
            assert_eq!(row.count, 1);
            assert_eq!(row.min, row.max);
            assert_eq!(row.min, row.mean);
            assert_eq!(row.sd, 0.0);
        }
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn dominating_runtimes_come_out_significant() {
        let mut records = Vec::new();
        for (i, size) in (1..=6).map(|k| (k, k * 1000)) {
            for algo in ["random", "cmaes", "pso"] {
                let mut r = record(algo, Variate::Univariate, size, 0.1);
                r.runtime_seconds = match algo {
                    "random" => 100.0 + i as f64,
                    _ => 1.0 + i as f64 / 10.0,
                };
                records.push(r);
            }
        }
        let outcomes = run_stats(&records, 0.05);
        assert_eq!(outcomes.len(), 3);
        let (_, _, runtime_cell) = outcomes
            .iter()
            .find(|(v, m, _)| *v == Variate::Univariate && *m == PlotMetric::Runtime)
            .unwrap();
        let cell = runtime_cell.as_ref().unwrap();
        assert!(cell.report.p_value < 0.05);
        let random_idx = cell.labels.iter().position(|l| l == "random").unwrap();
        for other in 0..cell.labels.len() {
            if other != random_idx {
                assert!(cell.pairwise.get(random_idx, other).unwrap().significant);
            }
        }
    }

    #[test]
    fn identical_values_produce_no_significant_pairs() {
        let mut records = Vec::new();
        for size in [1000, 2000, 3000] {
            for algo in ["random", "cmaes"] {
                records.push(record(algo, Variate::Univariate, size, 0.1));
            }
        }
        let outcomes = run_stats(&records, 0.05);
        let (_, _, cell) = &outcomes[0];
        let cell = cell.as_ref().unwrap();
        assert_eq!(cell.report.h, 0.0);
        assert!(cell.pairwise.cells.iter().all(|c| !c.significant));
    }

    #[test]
    fn five_algorithms_give_ten_pairwise_cells() {
        let mut records = Vec::new();
        for (i, algo) in ["random", "cmaes", "bayes", "pso", "ngopt"].iter().enumerate() {
            for size in [1000, 2000] {
                records.push(record(algo, Variate::Univariate, size, 0.1 + i as f64 * 0.01));
            }
        }
        let outcomes = run_stats(&records, 0.05);
        let (_, _, cell) = &outcomes[0];
        assert_eq!(cell.as_ref().unwrap().pairwise.cells.len(), 10);
    }

    #[test]
    fn stats_preconditions_fail_soft() {
        // One algorithm only, and a single record per algorithm: both are
        // reported as errors without panicking.
        let lone = vec![record("random", Variate::Univariate, 1000, 0.1)];
        for (_, _, outcome) in run_stats(&lone, 0.05) {
            assert!(outcome.is_err());
        }
        let short = vec![
            record("random", Variate::Univariate, 1000, 0.1),
            record("cmaes", Variate::Univariate, 1000, 0.2),
        ];
        for (_, _, outcome) in run_stats(&short, 0.05) {
            assert!(outcome.is_err());
        }
    }

    #[test]
    fn fmt_f64_round_trips_exactly() {
        for v in [0.1, 1.0 / 3.0, 2e-9, 123456.789012345, f64::INFINITY, 0.007290358091535644] {
            let parsed: f64 = fmt_f64(v).parse().unwrap();
            assert_eq!(parsed.to_bits(), v.to_bits());
        }
        assert_eq!(fmt_f64(f64::NAN), "nan");
        assert!(fmt_f64(f64::NAN).parse::<f64>().unwrap().is_nan());
    }

    #[test]
    fn results_csv_round_trips_a_hand_built_ledger() {
        let cfg = ExperimentConfig {
            sizes: vec![1000],
            algorithms: vec![Algorithm::Random, Algorithm::Pso],
            ..ExperimentConfig::default()
        };
        let specs = cell_specs(&cfg);
        let best = SearchSpace::default().at_indices([1, 2, 3, 1, 2, 0]);
        let good = CellResult {
            spec: specs[0].clone(),
            outcome: CellOutcome::Completed {
                record: record("random", Variate::Univariate, 1000, 1.0 / 3.0),
                best: best.clone(),
                optimization: OptimizationResult {
                    algorithm: "random".into(),
                    best_params: best.clone(),
                    best_objective: 0.25,
                    history: vec![],
                    runtime_seconds: 1.0,
                    stopped_early: false,
                },
            },
        };
        let bad = CellResult {
            spec: specs[1].clone(),
            outcome: CellOutcome::Failed { message: "boom".into() },
        };
        let ledger = RunLedger { config: cfg, cells: vec![good, bad] };

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        write_results_csv(&ledger, &path).unwrap();

        let rows = read_results_csv(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].status, "ok");
        assert_eq!(rows[0].mape.to_bits(), (1.0f64 / 3.0).to_bits());
        assert_eq!(rows[0].best.as_ref().unwrap(), &best);
        assert_eq!(rows[1].status, "failed");
        assert!(rows[1].mape.is_nan());
        assert!(rows[1].best.is_none());

        let records = records_from_rows(&rows);
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].algorithm, "random");
    }

    #[test]
    fn read_results_rejects_foreign_headers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("other.csv");
        std::fs::write(&path, "a,b,c\n1,2,3\n").unwrap();
        assert!(read_results_csv(&path).is_err());
    }

    #[test]
    fn small_synthetic_run_completes_and_reproduces() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            out_dir: dir.path().to_path_buf(),
            ..tiny_config()
        };
        let first = run_experiment(&cfg).unwrap();
        assert_eq!(first.cells.len(), 1);
        assert_eq!(first.failed_count(), 0);
        let second = run_experiment(&cfg).unwrap();
        assert_eq!(first.records(), second.records());
        let CellOutcome::Completed { optimization, .. } = &first.cells[0].outcome else {
            panic!("cell failed");
        };
        assert_eq!(optimization.history.len(), 2);
    }

    #[test]
    fn write_outputs_emits_the_full_artifact_set() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            out_dir: dir.path().to_path_buf(),
            sizes: vec![60, 90],
            algorithms: vec![Algorithm::Random, Algorithm::Pso],
            budget: BudgetPolicy { max_trials: 10, patience: 10 },
            clock: Clock::Counted,
            ..ExperimentConfig::default()
        };
        let ledger = run_experiment(&cfg).unwrap();
        assert_eq!(ledger.failed_count(), 0, "cells failed: {:?}", ledger.cells);
        let paths = write_outputs(&ledger).unwrap();
        assert!(paths.results.exists());
        assert!(paths.trials.exists());
        assert!(paths.snapshot.exists());
        assert!(paths.summary.as_ref().unwrap().exists());
        assert_eq!(paths.stats.len(), 3);
        assert_eq!(paths.plots.len(), 3);

        // Replaying the CSV through the analysis path reproduces the exact
        // summary and report bytes.
        let rows = read_results_csv(&paths.results).unwrap();
        let records = records_from_rows(&rows);
        assert_eq!(records, ledger.records());
        let replay_dir = dir.path().join("replay");
        let (summary2, stats2) = write_analysis(&records, &replay_dir, SIGNIFICANCE_ALPHA).unwrap();
        let original = std::fs::read(paths.summary.unwrap()).unwrap();
        assert_eq!(std::fs::read(summary2).unwrap(), original);
        for (a, b) in paths.stats.iter().zip(&stats2) {
            assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
        }
    }

    #[test]
    fn failed_cells_are_recorded_not_fatal() {
        // Sample size 90 exceeds the 60-row frame, so that cell fails while
        // the 60-row cell completes.
        let cfg = ExperimentConfig {
            sizes: vec![60, 90],
            algorithms: vec![Algorithm::Random],
            budget: BudgetPolicy { max_trials: 1, patience: 1 },
            clock: Clock::Counted,
            ..ExperimentConfig::default()
        };
        let frame = {
            let raw = synth_demand(60, 7).unwrap();
            let (scaled, _) = fit_apply_minmax(&raw).unwrap();
            scaled
        };
        let specs = cell_specs(&cfg);
        let cells: Vec<CellResult> =
            specs.into_iter().map(|s| run_cell(&cfg, &frame, s)).collect();
        let ledger = RunLedger { config: cfg, cells };
        assert_eq!(ledger.failed_count(), 1);
        assert_eq!(ledger.records().len(), 1);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        write_results_csv(&ledger, &path).unwrap();
        let rows = read_results_csv(&path).unwrap();
        assert_eq!(rows[1].status, "failed");
    }

    #[test]
    fn worker_env_rejects_garbage() {
        // Guard the parse logic directly rather than mutating process env.
        let parse = |raw: &str| raw.trim().parse::<usize>().ok().filter(|&n| n > 0);
        assert_eq!(parse("4"), Some(4));
        assert_eq!(parse(" 2 "), Some(2));
        assert_eq!(parse("0"), None);
        assert_eq!(parse("many"), None);
    }
}
