//! Rule-based portfolio selector: picks one of the in-repo optimizers from
//! the problem dimension and trial budget, then delegates the whole run.

use super::{
    run_cmaes, run_pso, run_random_search, BudgetPolicy, OptimizationResult,
};
use crate::error::Result;
use crate::space::{HyperParams, SearchSpace, DIM};

/// Delegate chosen for a `(dimension, budget)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Portfolio {
    Random,
    Cmaes,
    Pso,
}

impl Portfolio {
    pub fn as_str(&self) -> &'static str {
        match self {
            Portfolio::Random => "random",
            Portfolio::Cmaes => "cmaes",
            Portfolio::Pso => "pso",
        }
    }
}

/// The selection rule: tiny budgets get random search, small smooth
/// problems get CMA-ES, everything else gets PSO.
pub fn ngopt_choice(dim: usize, max_trials: usize) -> Portfolio {
    if max_trials < 2 * dim {
        Portfolio::Random
    } else if dim <= 10 && max_trials <= 100 {
        Portfolio::Cmaes
    } else {
        Portfolio::Pso
    }
}

/// Portfolio run over the hyperparameter grid: selects by rule, delegates
/// budget, patience, and seed unchanged, and tags the result with the
/// selected delegate.
pub fn run_ngopt(
    objective: &mut dyn FnMut(&HyperParams) -> Result<f64>,
    space: &SearchSpace,
    budget: &BudgetPolicy,
    seed: u64,
) -> Result<OptimizationResult> {
    let choice = ngopt_choice(DIM, budget.max_trials);
    let mut result = match choice {
        Portfolio::Random => run_random_search(objective, space, budget, seed)?,
        Portfolio::Cmaes => run_cmaes(objective, space, budget, seed)?,
        Portfolio::Pso => run_pso(objective, space, budget, seed)?,
    };
    result.algorithm = format!("ngopt→{}", choice.as_str());
    Ok(result)
}
