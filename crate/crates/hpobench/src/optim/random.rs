//! Uninformed baseline: independent uniform draws, no early stopping.

use rand::Rng;

use super::{run_on_grid, BudgetPolicy, CubeDriver, CubeResult, OptimizationResult};
use crate::error::Result;
use crate::rng::seeded_rng;
use crate::space::{encode_indices, HyperParams, SearchSpace, DIM};

/// Uniform sampling over the continuous unit cube. Spends the whole budget;
/// patience never applies to random search.
pub fn random_minimize(
    objective: &mut dyn FnMut(&[f64]) -> Result<f64>,
    dim: usize,
    budget: &BudgetPolicy,
    seed: u64,
) -> Result<CubeResult> {
    let mut rng = seeded_rng(seed);
    let mut driver = CubeDriver::new(objective, budget, false)?;
    let mut point = vec![0.0; dim];
    while !driver.done() {
        for v in &mut point {
            *v = rng.gen::<f64>();
        }
        driver.evaluate(&point);
    }
    Ok(driver.finish())
}

/// Random search over the hyperparameter grid: exactly `max_trials`
/// configurations, each coordinate drawn uniformly over its grid values.
pub fn run_random_search(
    objective: &mut dyn FnMut(&HyperParams) -> Result<f64>,
    space: &SearchSpace,
    budget: &BudgetPolicy,
    seed: u64,
) -> Result<OptimizationResult> {
    let core = |cube_objective: &mut (dyn FnMut(&[f64]) -> Result<f64> + '_),
                _dim: usize|
     -> Result<CubeResult> {
        let mut rng = seeded_rng(seed);
        let sizes = space.grid_sizes();
        let mut driver = CubeDriver::new(cube_objective, budget, false)?;
        while !driver.done() {
            let mut idx = [0usize; DIM];
            for d in 0..DIM {
                idx[d] = rng.gen_range(0..sizes[d]);
            }
            driver.evaluate(&encode_indices(idx, space).0);
        }
        Ok(driver.finish())
    };
    run_on_grid("random", core, objective, space)
}
