//! Particle swarm optimization with the standard constriction constants
//! (w = 0.729, c1 = c2 = 1.49445) and a synchronously updated global best.

use rand::Rng;

use super::{run_on_grid, BudgetPolicy, CubeDriver, CubeResult, OptimizationResult};
use crate::error::{Error, Result};
use crate::rng::seeded_rng;
use crate::space::{HyperParams, SearchSpace};

const SWARM: usize = 10;
const INERTIA: f64 = 0.729;
const COGNITIVE: f64 = 1.49445;
const SOCIAL: f64 = 1.49445;

struct Particle {
    x: Vec<f64>,
    v: Vec<f64>,
    best_x: Vec<f64>,
    best_f: f64,
}

fn pso_swarm_minimize(
    objective: &mut dyn FnMut(&[f64]) -> Result<f64>,
    dim: usize,
    swarm: usize,
    budget: &BudgetPolicy,
    seed: u64,
) -> Result<CubeResult> {
    if budget.max_trials < swarm {
        return Err(Error::Optim(format!(
            "budget {} below the swarm size {swarm}",
            budget.max_trials
        )));
    }
    let mut rng = seeded_rng(seed);
    let mut driver = CubeDriver::new(objective, budget, true)?;

    let mut particles: Vec<Particle> = Vec::with_capacity(swarm);
    for _ in 0..swarm {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
        particles.push(Particle { v: vec![0.0; dim], best_x: x.clone(), best_f: f64::INFINITY, x });
    }
    for p in &mut particles {
        if driver.done() {
            break;
        }
        p.best_f = driver.evaluate(&p.x);
    }

    // Global best over personal bests, first particle winning ties.
    let mut gbest_x = particles[0].best_x.clone();
    let mut gbest_f = particles[0].best_f;
    for p in &particles[1..] {
        if p.best_f < gbest_f {
            gbest_f = p.best_f;
            gbest_x = p.best_x.clone();
        }
    }

    while !driver.done() {
        for p in &mut particles {
            if driver.done() {
                break;
            }
            for d in 0..dim {
                let r1 = rng.gen::<f64>();
                let r2 = rng.gen::<f64>();
                p.v[d] = INERTIA * p.v[d]
                    + COGNITIVE * r1 * (p.best_x[d] - p.x[d])
                    + SOCIAL * r2 * (gbest_x[d] - p.x[d]);
                p.x[d] = (p.x[d] + p.v[d]).clamp(0.0, 1.0);
            }
            let f = driver.evaluate(&p.x);
            if f < p.best_f {
                p.best_f = f;
                p.best_x = p.x.clone();
            }
        }
        for p in &particles {
            if p.best_f < gbest_f {
                gbest_f = p.best_f;
                gbest_x = p.best_x.clone();
            }
        }
    }

    Ok(driver.finish())
}

/// PSO over `[0,1]^dim` with a 10-particle swarm.
pub fn pso_minimize(
    objective: &mut dyn FnMut(&[f64]) -> Result<f64>,
    dim: usize,
    budget: &BudgetPolicy,
    seed: u64,
) -> Result<CubeResult> {
    pso_swarm_minimize(objective, dim, SWARM, budget, seed)
}

/// PSO over the hyperparameter grid.
pub fn run_pso(
    objective: &mut dyn FnMut(&HyperParams) -> Result<f64>,
    space: &SearchSpace,
    budget: &BudgetPolicy,
    seed: u64,
) -> Result<OptimizationResult> {
    run_on_grid(
        "pso",
        |cube_objective, dim| pso_minimize(cube_objective, dim, budget, seed),
        objective,
        space,
    )
}
