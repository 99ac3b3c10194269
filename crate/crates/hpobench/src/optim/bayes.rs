//! Bayesian optimization: a zero-mean Gaussian process with a
//! squared-exponential kernel over unit-cube points, maximizing expected
//! improvement across a fixed budget of seeded candidate points.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::{run_on_grid, BudgetPolicy, CubeDriver, CubeResult, OptimizationResult};
use crate::error::{Error, Result};
use crate::rng::seeded_rng;
use crate::space::{HyperParams, SearchSpace};

const INITIAL_DESIGN: usize = 5;
const CANDIDATES: usize = 1024;
const LENGTHSCALES: [f64; 6] = [0.05, 0.1, 0.2, 0.4, 0.8, 1.6];
const SIGNAL_VARIANCES: [f64; 3] = [0.25, 1.0, 4.0];
const BASE_JITTER: f64 = 1e-6;
const MAX_JITTER: f64 = 1e-2;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn kernel(a: &[f64], b: &[f64], lengthscale: f64, signal_var: f64) -> f64 {
    signal_var * (-sq_dist(a, b) / (2.0 * lengthscale * lengthscale)).exp()
}

/// A factorized GP posterior on standardized objective values.
struct Posterior {
    x: Vec<Vec<f64>>,
    alpha: DVector<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
    lengthscale: f64,
    signal_var: f64,
    f_best: f64,
}

impl Posterior {
    fn predict(&self, point: &[f64]) -> (f64, f64) {
        let k_star = DVector::from_fn(self.x.len(), |i, _| {
            kernel(&self.x[i], point, self.lengthscale, self.signal_var)
        });
        let mean = k_star.dot(&self.alpha);
        let solved = self.chol.solve(&k_star);
        let var = (self.signal_var - k_star.dot(&solved)).max(0.0);
        (mean, var.sqrt())
    }
}

/// Closed-form expected improvement for a minimization target.
fn expected_improvement(mean: f64, sd: f64, f_best: f64, normal: &Normal) -> f64 {
    let gap = f_best - mean;
    if sd < 1e-15 {
        return gap.max(0.0);
    }
    let z = gap / sd;
    gap * normal.cdf(z) + sd * normal.pdf(z)
}

/// Fits the GP by grid-searched maximum likelihood, escalating jitter
/// tenfold per Cholesky failure. `None` when no kernel setting factorizes
/// or fewer than two finite observations exist.
fn fit_posterior(history_points: &[Vec<f64>], history_values: &[f64]) -> Option<Posterior> {
    let finite: Vec<usize> =
        (0..history_values.len()).filter(|&i| history_values[i].is_finite()).collect();
    if finite.len() < 2 {
        return None;
    }
    let x: Vec<Vec<f64>> = finite.iter().map(|&i| history_points[i].clone()).collect();
    let raw: Vec<f64> = finite.iter().map(|&i| history_values[i]).collect();

    let n = raw.len();
    let mean = raw.iter().sum::<f64>() / n as f64;
    let var = raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let scale = if var.sqrt() < 1e-12 { 1.0 } else { var.sqrt() };
    let y = DVector::from_iterator(n, raw.iter().map(|v| (v - mean) / scale));
    let f_best = y.iter().cloned().fold(f64::INFINITY, f64::min);

    let mut best: Option<(f64, Posterior)> = None;
    for &lengthscale in &LENGTHSCALES {
        for &signal_var in &SIGNAL_VARIANCES {
            let gram = DMatrix::from_fn(n, n, |i, j| {
                kernel(&x[i], &x[j], lengthscale, signal_var)
            });
            let mut jitter = BASE_JITTER;
            let chol = loop {
                let mut jittered = gram.clone();
                for i in 0..n {
                    jittered[(i, i)] += jitter;
                }
                match Cholesky::new(jittered) {
                    Some(c) => break Some(c),
                    None if jitter < MAX_JITTER => jitter *= 10.0,
                    None => break None,
                }
            };
            let Some(chol) = chol else { continue };
            let alpha = chol.solve(&y);
            let log_det: f64 = (0..n).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>() * 2.0;
            let lml = -0.5 * y.dot(&alpha)
                - 0.5 * log_det
                - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
            if !lml.is_finite() {
                continue;
            }
            if best.as_ref().is_none_or(|(b, _)| lml > *b) {
                best = Some((
                    lml,
                    Posterior { x: x.clone(), alpha, chol, lengthscale, signal_var, f_best },
                ));
            }
        }
    }
    best.map(|(_, p)| p)
}

fn uniform_point(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.gen::<f64>()).collect()
}

/// GP-EI over `[0,1]^dim`: 5 uniform starts, then one EI-maximizing
/// candidate per trial out of 1,024 seeded uniform proposals.
pub fn bayes_minimize(
    objective: &mut dyn FnMut(&[f64]) -> Result<f64>,
    dim: usize,
    budget: &BudgetPolicy,
    seed: u64,
) -> Result<CubeResult> {
    if budget.max_trials < INITIAL_DESIGN + 1 {
        return Err(Error::Optim(format!(
            "budget {} below initial design {INITIAL_DESIGN} + 1",
            budget.max_trials
        )));
    }
    let mut rng = seeded_rng(seed);
    let mut driver = CubeDriver::new(objective, budget, true)?;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    for _ in 0..INITIAL_DESIGN {
        if driver.done() {
            break;
        }
        let point = uniform_point(&mut rng, dim);
        driver.evaluate(&point);
    }

    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    while !driver.done() {
        points.clear();
        values.clear();
        // The GP always sees the full history so far.
        for trial in driver.history() {
            points.push(trial.point.clone());
            values.push(trial.objective);
        }
        let next = match fit_posterior(&points, &values) {
            Some(gp) => {
                let mut best_point = uniform_point(&mut rng, dim);
                let (m0, s0) = gp.predict(&best_point);
                let mut best_ei = expected_improvement(m0, s0, gp.f_best, &normal);
                for _ in 1..CANDIDATES {
                    let candidate = uniform_point(&mut rng, dim);
                    let (m, s) = gp.predict(&candidate);
                    let ei = expected_improvement(m, s, gp.f_best, &normal);
                    if ei > best_ei {
                        best_ei = ei;
                        best_point = candidate;
                    }
                }
                best_point
            }
            None => uniform_point(&mut rng, dim),
        };
        driver.evaluate(&next);
    }

    Ok(driver.finish())
}

/// GP-EI over the hyperparameter grid.
pub fn run_bayesian(
    objective: &mut dyn FnMut(&HyperParams) -> Result<f64>,
    space: &SearchSpace,
    budget: &BudgetPolicy,
    seed: u64,
) -> Result<OptimizationResult> {
    run_on_grid(
        "bayes",
        |cube_objective, dim| bayes_minimize(cube_objective, dim, budget, seed),
        objective,
        space,
    )
}
