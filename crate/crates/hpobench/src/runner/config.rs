//! Experiment configuration: the resolved grid definition plus the layered
//! TOML-file / flag-override machinery that produces it.

use std::path::PathBuf;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::features::Variate;
use crate::metrics::Clock;
use crate::optim::BudgetPolicy;

/// The five tunable-search strategies the harness compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Random,
    Cmaes,
    Bayes,
    Pso,
    Ngopt,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Random,
        Algorithm::Cmaes,
        Algorithm::Bayes,
        Algorithm::Pso,
        Algorithm::Ngopt,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Random => "random",
            Algorithm::Cmaes => "cmaes",
            Algorithm::Bayes => "bayes",
            Algorithm::Pso => "pso",
            Algorithm::Ngopt => "ngopt",
        }
    }

    pub fn parse(s: &str) -> Result<Algorithm> {
        match s {
            "random" => Ok(Algorithm::Random),
            "cmaes" => Ok(Algorithm::Cmaes),
            "bayes" => Ok(Algorithm::Bayes),
            "pso" => Ok(Algorithm::Pso),
            "ngopt" => Ok(Algorithm::Ngopt),
            other => Err(Error::Config(format!(
                "unknown algorithm {other:?}; expected one of random, cmaes, bayes, pso, ngopt"
            ))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where the demand series comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataSource {
    Csv(PathBuf),
    Synthetic,
}

/// Fully resolved and validated experiment definition. Construct via
/// [`ConfigPatch::resolve`] or fill fields directly and call [`validate`].
///
/// [`validate`]: ExperimentConfig::validate
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub sizes: Vec<usize>,
    pub variates: Vec<Variate>,
    pub algorithms: Vec<Algorithm>,
    /// Lag window: consecutive past hours used as predictors.
    pub lag_window: usize,
    pub budget: BudgetPolicy,
    pub test_fraction: f64,
    pub out_dir: PathBuf,
    pub master_seed: u64,
    pub repeats: usize,
    pub clock: Clock,
}

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_LAG_WINDOW: usize = 24;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

pub fn default_sizes() -> Vec<usize> {
    (1..=20).map(|k| k * 1000).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            source: DataSource::Synthetic,
            sizes: default_sizes(),
            variates: vec![Variate::Univariate],
            algorithms: Algorithm::ALL.to_vec(),
            lag_window: DEFAULT_LAG_WINDOW,
            budget: BudgetPolicy::default(),
            test_fraction: DEFAULT_TEST_FRACTION,
            out_dir: PathBuf::from("results"),
            master_seed: DEFAULT_SEED,
            repeats: 1,
            clock: Clock::Wall,
        }
    }
}

impl ExperimentConfig {
    /// Checks the grid invariants: ascending sizes each large enough for the
    /// lag window plus 5-fold CV, known deduplicated algorithm/variate sets,
    /// a proper test fraction, and a coherent budget.
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::Config("sizes must be nonempty".into()));
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "sizes must be strictly ascending, got {:?}",
                self.sizes
            )));
        }
        let floor = self.lag_window + 25;
        if let Some(&small) = self.sizes.iter().find(|&&s| s < floor) {
            return Err(Error::Config(format!(
                "size {small} is below the minimum {floor} (lag window {} + 25 rows for 5-fold CV)",
                self.lag_window
            )));
        }
        if self.variates.is_empty() {
            return Err(Error::Config("variates must be nonempty".into()));
        }
        if has_duplicates(&self.variates) {
            return Err(Error::Config("duplicate variate entries".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("algorithms must be nonempty".into()));
        }
        if has_duplicates(&self.algorithms) {
            return Err(Error::Config("duplicate algorithm entries".into()));
        }
        if self.lag_window == 0 {
            return Err(Error::Config("lag window must be at least 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        self.budget.validate()
    }

    /// Flat key-value snapshot in the config-file syntax, suitable both for
    /// the output directory and for feeding back through `--config`.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        s.push_str("schema_version = 1\n");
        s.push_str(&format!("seed = {}\n", self.master_seed));
        match &self.source {
            DataSource::Csv(path) => s.push_str(&format!("data = {:?}\n", path.display().to_string())),
            DataSource::Synthetic => s.push_str("synthetic = true\n"),
        }
        s.push_str(&format!("out = {:?}\n", self.out_dir.display().to_string()));
        s.push_str(&format!(
            "sizes = [{}]\n",
            self.sizes.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
        ));
        s.push_str(&format!(
            "variates = [{}]\n",
            self.variates.iter().map(|v| format!("{:?}", v.as_str())).collect::<Vec<_>>().join(", ")
        ));
        s.push_str(&format!(
            "algorithms = [{}]\n",
            self.algorithms.iter().map(|a| format!("{:?}", a.as_str())).collect::<Vec<_>>().join(", ")
        ));
        s.push_str(&format!("lag_window = {}\n", self.lag_window));
        s.push_str(&format!("max_trials = {}\n", self.budget.max_trials));
        s.push_str(&format!("patience = {}\n", self.budget.patience));
        s.push_str(&format!("test_fraction = {}\n", self.test_fraction));
        s.push_str(&format!("repeats = {}\n", self.repeats));
        s.push_str(&format!("clock = {:?}\n", self.clock.as_str()));
        s
    }
}

fn has_duplicates<T: PartialEq>(items: &[T]) -> bool {
    items.iter().enumerate().any(|(i, a)| items[i + 1..].contains(a))
}

/// A partial configuration: every field optional, so file contents and
/// command-line overrides can be layered before resolving defaults.
#[derive(Debug, Clone, Default)]
pub struct ConfigPatch {
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub synthetic: Option<bool>,
    pub out: Option<PathBuf>,
    pub sizes: Option<Vec<usize>>,
    pub variates: Option<Vec<Variate>>,
    pub algorithms: Option<Vec<Algorithm>>,
    pub lag_window: Option<usize>,
    pub max_trials: Option<usize>,
    pub patience: Option<usize>,
    pub test_fraction: Option<f64>,
    pub repeats: Option<usize>,
    pub clock: Option<Clock>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u32,
    seed: Option<u64>,
    data: Option<PathBuf>,
    synthetic: Option<bool>,
    out: Option<PathBuf>,
    sizes: Option<Vec<usize>>,
    variates: Option<Vec<String>>,
    algorithms: Option<Vec<String>>,
    lag_window: Option<usize>,
    max_trials: Option<usize>,
    patience: Option<usize>,
    test_fraction: Option<f64>,
    repeats: Option<usize>,
    clock: Option<String>,
}

impl ConfigPatch {
    pub fn from_toml_str(text: &str) -> Result<ConfigPatch> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        if raw.schema_version != 1 {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (this build reads version 1)",
                raw.schema_version
            )));
        }
        let variates = raw
            .variates
            .map(|vs| vs.iter().map(|v| Variate::parse(v)).collect::<Result<Vec<_>>>())
            .transpose()?;
        let algorithms = raw
            .algorithms
            .map(|als| als.iter().map(|a| Algorithm::parse(a)).collect::<Result<Vec<_>>>())
            .transpose()?;
        let clock = raw.clock.map(|c| Clock::parse(&c)).transpose()?;
        Ok(ConfigPatch {
            seed: raw.seed,
            data: raw.data,
            synthetic: raw.synthetic,
            out: raw.out,
            sizes: raw.sizes,
            variates,
            algorithms,
            lag_window: raw.lag_window,
            max_trials: raw.max_trials,
            patience: raw.patience,
            test_fraction: raw.test_fraction,
            repeats: raw.repeats,
            clock,
        })
    }

    pub fn from_toml_file(path: &std::path::Path) -> Result<ConfigPatch> {
        let text = std::fs::read_to_string(path)?;
        ConfigPatch::from_toml_str(&text)
    }

    /// Layers `self` on top of `base`: any field set here wins.
    pub fn merged_over(self, base: ConfigPatch) -> ConfigPatch {
        ConfigPatch {
            seed: self.seed.or(base.seed),
            data: self.data.or(base.data),
            synthetic: self.synthetic.or(base.synthetic),
            out: self.out.or(base.out),
            sizes: self.sizes.or(base.sizes),
            variates: self.variates.or(base.variates),
            algorithms: self.algorithms.or(base.algorithms),
            lag_window: self.lag_window.or(base.lag_window),
            max_trials: self.max_trials.or(base.max_trials),
            patience: self.patience.or(base.patience),
            test_fraction: self.test_fraction.or(base.test_fraction),
            repeats: self.repeats.or(base.repeats),
            clock: self.clock.or(base.clock),
        }
    }

    /// Fills defaults, settles the data source, and validates the result.
    pub fn resolve(self) -> Result<ExperimentConfig> {
        let source = match (self.data, self.synthetic.unwrap_or(false)) {
            (Some(_), true) => {
                return Err(Error::Config(
                    "choose either a data path or the synthetic generator, not both".into(),
                ))
            }
            (Some(path), false) => DataSource::Csv(path),
            (None, true) => DataSource::Synthetic,
            (None, false) => {
                return Err(Error::Config(
                    "no data source: set a data path or enable the synthetic generator".into(),
                ))
            }
        };
        let max_trials = self.max_trials.unwrap_or(50);
        let budget = match self.patience {
            Some(patience) => BudgetPolicy { max_trials, patience },
            None => BudgetPolicy { max_trials, patience: max_trials.min(20) },
        };
        let cfg = ExperimentConfig {
            source,
            sizes: self.sizes.unwrap_or_else(default_sizes),
            variates: self.variates.unwrap_or_else(|| vec![Variate::Univariate]),
            algorithms: self.algorithms.unwrap_or_else(|| Algorithm::ALL.to_vec()),
            lag_window: self.lag_window.unwrap_or(DEFAULT_LAG_WINDOW),
            budget,
            test_fraction: self.test_fraction.unwrap_or(DEFAULT_TEST_FRACTION),
            out_dir: self.out.unwrap_or_else(|| PathBuf::from("results")),
            master_seed: self.seed.unwrap_or(DEFAULT_SEED),
            repeats: self.repeats.unwrap_or(1),
            clock: self.clock.unwrap_or(Clock::Wall),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
