//! CMA-ES: evolution strategy with covariance matrix adaptation, run in the
//! unit cube with the standard scalar constants (weighted recombination,
//! cumulative step-size adaptation, rank-1 plus rank-μ covariance updates).

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{run_on_grid, BudgetPolicy, CubeDriver, CubeResult, OptimizationResult};
use crate::error::Result;
use crate::rng::{randn, seeded_rng};
use crate::space::{HyperParams, SearchSpace};

struct Constants {
    n: f64,
    lambda: usize,
    mu: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    /// E‖N(0, I_n)‖, the step-size adaptation reference length.
    chi_n: f64,
}

fn constants(dim: usize) -> Constants {
    let n = dim as f64;
    let lambda = 4 + (3.0 * n.ln()).floor() as usize;
    let mu = lambda / 2;
    let mut weights: Vec<f64> =
        (0..mu).map(|i| (mu as f64 + 0.5).ln() - ((i + 1) as f64).ln()).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
    let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
    let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
    let c_1 = 2.0 / ((n + 1.3) * (n + 1.3) + mu_eff);
    let c_mu =
        (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) * (n + 2.0) + mu_eff));
    let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
    Constants { n, lambda, mu, weights, mu_eff, c_sigma, d_sigma, c_c, c_1, c_mu, chi_n }
}

/// Eigenfactorization `C = B · diag(d²) · Bᵀ` used for both sampling and
/// the inverse square root. `None` when C is no longer positive definite.
struct EigenBasis {
    b: DMatrix<f64>,
    d: DVector<f64>,
}

fn factorize(c: &DMatrix<f64>) -> Option<EigenBasis> {
    let eig = SymmetricEigen::new(c.clone());
    if eig.eigenvalues.iter().any(|&v| !v.is_finite() || v <= 1e-30) {
        return None;
    }
    Some(EigenBasis { b: eig.eigenvectors, d: eig.eigenvalues.map(f64::sqrt) })
}

impl EigenBasis {
    fn sample_step(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.b * z.component_mul(&self.d)
    }

    fn inverse_sqrt_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let projected = self.b.transpose() * v;
        &self.b * projected.component_div(&self.d)
    }
}

/// CMA-ES over `[0,1]^dim`. Samples are clamped into the cube before
/// evaluation and the clamped values feed the distribution updates, keeping
/// the mean inside the box.
pub fn cmaes_minimize(
    objective: &mut dyn FnMut(&[f64]) -> Result<f64>,
    dim: usize,
    budget: &BudgetPolicy,
    seed: u64,
) -> Result<CubeResult> {
    let k = constants(dim);
    if budget.max_trials < k.lambda {
        return Err(crate::error::Error::Optim(format!(
            "budget {} below one generation ({} samples) in dimension {dim}",
            budget.max_trials, k.lambda
        )));
    }
    let mut rng = seeded_rng(seed);
    let mut driver = CubeDriver::new(objective, budget, true)?;

    let mut mean = DVector::from_element(dim, 0.5);
    let mut sigma = 0.3;
    let mut cov = DMatrix::<f64>::identity(dim, dim);
    let mut path_sigma = DVector::<f64>::zeros(dim);
    let mut path_c = DVector::<f64>::zeros(dim);
    let mut generation = 0usize;

    while !driver.done() {
        let basis = match factorize(&cov) {
            Some(b) => b,
            None => {
                log::warn!("covariance lost positive definiteness; resetting to identity");
                cov = DMatrix::identity(dim, dim);
                path_c.fill(0.0);
                path_sigma.fill(0.0);
                factorize(&cov).expect("identity factorizes")
            }
        };

        let mut scored: Vec<(f64, DVector<f64>)> = Vec::with_capacity(k.lambda);
        for _ in 0..k.lambda {
            if driver.done() {
                break;
            }
            let z = DVector::from_fn(dim, |_, _| randn(&mut rng));
            let mut x = &mean + sigma * basis.sample_step(&z);
            for v in x.iter_mut() {
                *v = v.clamp(0.0, 1.0);
            }
            let f = driver.evaluate(x.as_slice());
            scored.push((f, x));
        }
        if scored.len() < k.lambda {
            break;
        }

        let mut order: Vec<usize> = (0..k.lambda).collect();
        order.sort_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0));

        let old_mean = mean.clone();
        mean = DVector::zeros(dim);
        for (rank, &idx) in order[..k.mu].iter().enumerate() {
            mean += k.weights[rank] * &scored[idx].1;
        }
        let y_w = (&mean - &old_mean) / sigma;

        path_sigma = (1.0 - k.c_sigma) * &path_sigma
            + (k.c_sigma * (2.0 - k.c_sigma) * k.mu_eff).sqrt() * basis.inverse_sqrt_apply(&y_w);
        generation += 1;
        let decay = 1.0 - (1.0 - k.c_sigma).powi(2 * generation as i32);
        let h_sigma = if path_sigma.norm() / decay.sqrt()
            < (1.4 + 2.0 / (k.n + 1.0)) * k.chi_n
        {
            1.0
        } else {
            0.0
        };
        path_c = (1.0 - k.c_c) * &path_c
            + h_sigma * (k.c_c * (2.0 - k.c_c) * k.mu_eff).sqrt() * &y_w;

        let mut rank_mu = DMatrix::<f64>::zeros(dim, dim);
        for (rank, &idx) in order[..k.mu].iter().enumerate() {
            let y = (&scored[idx].1 - &old_mean) / sigma;
            rank_mu += k.weights[rank] * (&y * y.transpose());
        }
        cov = (1.0 - k.c_1 - k.c_mu) * &cov
            + k.c_1
                * (&path_c * path_c.transpose()
                    + (1.0 - h_sigma) * k.c_c * (2.0 - k.c_c) * &cov)
            + k.c_mu * rank_mu;
        // Symmetrize to stop round-off drift from accumulating.
        cov = (&cov + cov.transpose()) * 0.5;

        sigma *= ((k.c_sigma / k.d_sigma) * (path_sigma.norm() / k.chi_n - 1.0)).exp();
        sigma = sigma.clamp(1e-12, 1.0);
    }

    Ok(driver.finish())
}

/// CMA-ES over the hyperparameter grid.
pub fn run_cmaes(
    objective: &mut dyn FnMut(&HyperParams) -> Result<f64>,
    space: &SearchSpace,
    budget: &BudgetPolicy,
    seed: u64,
) -> Result<OptimizationResult> {
    run_on_grid(
        "cmaes",
        |cube_objective, dim| cmaes_minimize(cube_objective, dim, budget, seed),
        objective,
        space,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::testutil::sphere;

    #[test]
    fn scalar_constants_match_the_standard_values_in_6d() {
        let k = constants(6);
        assert_eq!(k.lambda, 9);
        assert_eq!(k.mu, 4);
        assert!((k.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(k.weights.windows(2).all(|w| w[0] > w[1]));
        assert!(k.mu_eff > 1.0 && k.mu_eff < k.mu as f64 + 1.0);
        assert!(k.c_1 > 0.0 && k.c_mu > 0.0 && k.c_1 + k.c_mu < 1.0);
        // E‖N(0,I_6)‖ = √2·Γ(3.5)/Γ(3) ≈ 2.3500; the series sits within 1e-3.
        assert!((k.chi_n - 2.3500).abs() < 1e-3);
    }

    #[test]
    fn fixed_seed_reproduces_the_history() {
        // Counted clock: per-trial elapsed derives from work, not wall time,
        // so equal seeds give bitwise-equal histories.
        crate::metrics::with_clock(crate::metrics::Clock::Counted, || {
            let policy = BudgetPolicy { max_trials: 40, patience: 40 };
            let mut obj_a = |x: &[f64]| Ok(sphere(x));
            let a = cmaes_minimize(&mut obj_a, 5, &policy, 17).unwrap();
            let mut obj_b = |x: &[f64]| Ok(sphere(x));
            let b = cmaes_minimize(&mut obj_b, 5, &policy, 17).unwrap();
            assert_eq!(a.history, b.history);
        });
    }

    #[test]
    fn adapts_toward_the_sphere_minimum() {
        let policy = BudgetPolicy { max_trials: 200, patience: 200 };
        let mut objective = |x: &[f64]| Ok(sphere(x));
        let result = cmaes_minimize(&mut objective, 5, &policy, 3).unwrap();
        assert!(result.best_objective() < 0.01, "best {}", result.best_objective());
        // Late generations concentrate near the optimum: the last trial's
        // point should be far closer than the first sample.
        let first = sphere(&result.history[0].point);
        assert!(result.best_objective() < first);
    }

    #[test]
    fn respects_the_budget_exactly_when_improving_steadily() {
        let policy = BudgetPolicy { max_trials: 25, patience: 25 };
        let mut objective = |x: &[f64]| Ok(sphere(x));
        let result = cmaes_minimize(&mut objective, 5, &policy, 11).unwrap();
        assert!(result.history.len() <= 25);
    }

    #[test]
    fn stalls_out_on_a_flat_objective() {
        let policy = BudgetPolicy { max_trials: 500, patience: 10 };
        let mut objective = |_: &[f64]| Ok(1.0);
        let result = cmaes_minimize(&mut objective, 5, &policy, 5).unwrap();
        assert!(result.stopped_early);
        // Trial 0 sets the best; the stop trips `patience` trials later.
        assert_eq!(result.history.len(), 11);
    }

    #[test]
    fn rejects_budgets_below_one_generation() {
        let policy = BudgetPolicy { max_trials: 7, patience: 7 };
        let mut objective = |x: &[f64]| Ok(sphere(x));
        assert!(cmaes_minimize(&mut objective, 6, &policy, 0).is_err());
    }

    #[test]
    fn failed_objectives_do_not_break_the_generation_loop() {
        let mut count = 0;
        let mut objective = |x: &[f64]| {
            count += 1;
            if count % 3 == 0 {
                Err(crate::error::Error::Optim("flaky".into()))
            } else {
                Ok(sphere(x))
            }
        };
        let policy = BudgetPolicy { max_trials: 30, patience: 30 };
        let result = cmaes_minimize(&mut objective, 5, &policy, 2).unwrap();
        assert_eq!(result.history.len(), 30);
        assert!(result.history.iter().any(|t| t.objective == f64::INFINITY));
        assert!(result.best_objective().is_finite());
    }

    #[test]
    fn grid_run_stays_on_grid_and_tags_itself() {
        let space = SearchSpace::default();
        let mut objective = |hp: &HyperParams| Ok(hp.learning_rate + hp.min_child_weight);
        let budget = BudgetPolicy { max_trials: 30, patience: 30 };
        let result = run_cmaes(&mut objective, &space, &budget, 8).unwrap();
        assert_eq!(result.algorithm, "cmaes");
        for trial in &result.history {
            assert!(space.contains(&trial.params));
        }
        let min = result.history.iter().map(|t| t.objective).fold(f64::INFINITY, f64::min);
        assert_eq!(result.best_objective, min);
    }
}
