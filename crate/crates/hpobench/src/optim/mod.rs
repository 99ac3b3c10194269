//! The five hyperparameter optimizers behind one budgeted, early-stopped
//! minimization contract.
//!
//! Each algorithm's search logic lives in a unit-cube core that knows nothing
//! about hyperparameter grids — it proposes points in `[0,1]^d` and receives
//! objective values. The public `run_*` entry points wrap a core with the
//! grid decode, so every recorded configuration is a grid member by
//! construction. The cores stay directly callable for continuous test
//! problems of any dimension.

mod bayes;
mod cmaes;
mod ngopt;
mod pso;
mod random;

pub use bayes::run_bayesian;
pub use cmaes::run_cmaes;
pub use ngopt::{ngopt_choice, run_ngopt, Portfolio};
pub use pso::run_pso;
pub use random::run_random_search;

pub use bayes::bayes_minimize;
pub use cmaes::cmaes_minimize;
pub use pso::pso_minimize;
pub use random::random_minimize;

use crate::error::{Error, Result};
use crate::metrics::Stopwatch;
use crate::space::{decode, HyperParams, SearchSpace, UnitPoint, DIM};

/// One completed objective evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub index: usize,
    pub params: HyperParams,
    pub objective: f64,
    pub elapsed: f64,
}

/// Outcome of one optimizer run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub algorithm: String,
    pub best_params: HyperParams,
    pub best_objective: f64,
    pub history: Vec<TrialRecord>,
    pub runtime_seconds: f64,
    pub stopped_early: bool,
}

/// Evaluation budget and patience. Patience is ignored by random search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetPolicy {
    pub max_trials: usize,
    pub patience: usize,
}

impl Default for BudgetPolicy {
    fn default() -> Self {
        BudgetPolicy { max_trials: 50, patience: 20 }
    }
}

impl BudgetPolicy {
    /// Default patience clipped to the trial budget.
    pub fn with_max_trials(max_trials: usize) -> BudgetPolicy {
        BudgetPolicy { max_trials, patience: max_trials.min(20) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_trials == 0 {
            return Err(Error::Optim("budget must allow at least one trial".into()));
        }
        if self.patience > self.max_trials {
            return Err(Error::Optim(format!(
                "patience {} exceeds max_trials {}",
                self.patience, self.max_trials
            )));
        }
        Ok(())
    }
}

/// True iff the running best has not strictly improved over the last
/// `patience` completed trials.
pub fn early_stop_check(history: &[TrialRecord], patience: usize) -> bool {
    trailing_stall(history.iter().map(|t| t.objective)) >= Some(patience)
}

/// Number of trials since the last strict improvement of the running best
/// (`None` for an empty history).
fn trailing_stall(objectives: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best = f64::INFINITY;
    let mut last_improve = 0usize;
    let mut len = 0usize;
    for (i, obj) in objectives.enumerate() {
        if obj < best {
            best = obj;
            last_improve = i;
        }
        len = i + 1;
    }
    if len == 0 {
        None
    } else {
        Some(len - 1 - last_improve)
    }
}

/// One evaluation in the unit-cube layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeTrial {
    pub index: usize,
    pub point: Vec<f64>,
    pub objective: f64,
    pub elapsed: f64,
}

/// Outcome of a unit-cube minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeResult {
    pub history: Vec<CubeTrial>,
    pub best_index: usize,
    pub stopped_early: bool,
    pub runtime_seconds: f64,
}

impl CubeResult {
    pub fn best_objective(&self) -> f64 {
        self.history[self.best_index].objective
    }

    pub fn best_point(&self) -> &[f64] {
        &self.history[self.best_index].point
    }
}

/// Budget and patience bookkeeping shared by every core: records trials,
/// tracks the running best, and raises the stop flag when the trailing
/// stall reaches the patience limit.
pub(crate) struct CubeDriver<'a, 'b> {
    objective: &'a mut (dyn FnMut(&[f64]) -> Result<f64> + 'b),
    max_trials: usize,
    patience: Option<usize>,
    history: Vec<CubeTrial>,
    best: f64,
    best_index: usize,
    last_improve: usize,
    stalled: bool,
    clock: Stopwatch,
}

impl<'a, 'b> CubeDriver<'a, 'b> {
    pub(crate) fn new(
        objective: &'a mut (dyn FnMut(&[f64]) -> Result<f64> + 'b),
        budget: &BudgetPolicy,
        patience_active: bool,
    ) -> Result<CubeDriver<'a, 'b>> {
        budget.validate()?;
        Ok(CubeDriver {
            objective,
            max_trials: budget.max_trials,
            patience: patience_active.then_some(budget.patience),
            history: Vec::with_capacity(budget.max_trials),
            best: f64::INFINITY,
            best_index: 0,
            last_improve: 0,
            stalled: false,
            clock: Stopwatch::start(),
        })
    }

    /// Evaluates one point, recording a failed objective as +∞ so the run
    /// continues. Returns the recorded value.
    pub(crate) fn evaluate(&mut self, point: &[f64]) -> f64 {
        debug_assert!(self.history.len() < self.max_trials, "budget overrun");
        let sw = Stopwatch::start();
        let value = match (self.objective)(point) {
            Ok(v) if v.is_finite() || v == f64::INFINITY => v,
            Ok(_) | Err(_) => f64::INFINITY,
        };
        let elapsed = sw.elapsed_seconds();
        let index = self.history.len();
        self.history.push(CubeTrial { index, point: point.to_vec(), objective: value, elapsed });
        if value < self.best {
            self.best = value;
            self.best_index = index;
            self.last_improve = index;
        }
        if let Some(p) = self.patience {
            if index - self.last_improve >= p {
                self.stalled = true;
            }
        }
        value
    }

    pub(crate) fn history(&self) -> &[CubeTrial] {
        &self.history
    }

    /// True once the budget is spent or patience has run out.
    pub(crate) fn done(&self) -> bool {
        self.stalled || self.history.len() >= self.max_trials
    }

    pub(crate) fn finish(self) -> CubeResult {
        CubeResult {
            best_index: self.best_index,
            stopped_early: self.stalled,
            runtime_seconds: self.clock.elapsed_seconds(),
            history: self.history,
        }
    }
}

/// Adapts a hyperparameter objective to the cube layer via the grid decode
/// and lifts the cube result back to hyperparameter records.
pub(crate) fn run_on_grid(
    algorithm: &str,
    core: impl FnOnce(&mut (dyn FnMut(&[f64]) -> Result<f64> + '_), usize) -> Result<CubeResult>,
    objective: &mut dyn FnMut(&HyperParams) -> Result<f64>,
    space: &SearchSpace,
) -> Result<OptimizationResult> {
    let mut cube_objective = |u: &[f64]| -> Result<f64> {
        objective(&decode(&unit_point(u), space))
    };
    let cube = core(&mut cube_objective, DIM)?;
    if cube.history.is_empty() {
        return Err(Error::Optim(format!("{algorithm} finished without any trial")));
    }
    let history: Vec<TrialRecord> = cube
        .history
        .iter()
        .map(|t| TrialRecord {
            index: t.index,
            params: decode(&unit_point(&t.point), space),
            objective: t.objective,
            elapsed: t.elapsed,
        })
        .collect();
    Ok(OptimizationResult {
        algorithm: algorithm.to_string(),
        best_params: history[cube.best_index].params,
        best_objective: history[cube.best_index].objective,
        history,
        runtime_seconds: cube.runtime_seconds,
        stopped_early: cube.stopped_early,
    })
}

fn unit_point(u: &[f64]) -> UnitPoint {
    let mut coords = [0.0; DIM];
    coords.copy_from_slice(u);
    UnitPoint(coords)
}

#[cfg(test)]
pub(crate) mod testutil {
    /// Shifted sphere: minimum 0 at `x = 0.3·1`, any dimension.
    pub fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|&v| (v - 0.3) * (v - 0.3)).sum()
    }
}
