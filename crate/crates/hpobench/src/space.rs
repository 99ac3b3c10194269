//! Hyperparameter search space: the tuned grids and the mapping between the
//! continuous unit cube the optimizers move in and concrete configurations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded_rng;

/// Number of tuned hyperparameters.
pub const DIM: usize = 6;

/// One concrete boosted-tree configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub max_depth: u32,
    pub learning_rate: f64,
    pub n_estimators: u32,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub min_child_weight: f64,
}

/// Ordered value grids, one per tuned parameter.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SearchSpace {
    pub max_depth: Vec<u32>,
    pub learning_rate: Vec<f64>,
    pub n_estimators: Vec<u32>,
    pub subsample: Vec<f64>,
    pub colsample_bytree: Vec<f64>,
    pub min_child_weight: Vec<f64>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            max_depth: (3..=10).collect(),
            learning_rate: vec![
                0.001, 0.003, 0.005, 0.007, 0.009, 0.01, 0.03, 0.05, 0.07, 0.09, 0.1, 0.3, 0.5,
                0.7, 0.9,
            ],
            n_estimators: (1..=10).map(|k| k * 100).collect(),
            subsample: vec![0.5, 0.7, 0.8, 1.0],
            colsample_bytree: vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            min_child_weight: vec![1.0, 3.0, 5.0, 7.0],
        }
    }
}

fn check_grid<T: PartialOrd + Copy>(name: &str, grid: &[T]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config(format!("grid `{name}` is empty")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("grid `{name}` is not strictly increasing")));
    }
    Ok(())
}

impl SearchSpace {
    /// Verifies every grid is nonempty and strictly increasing.
    pub fn validate(&self) -> Result<()> {
        check_grid("max_depth", &self.max_depth)?;
        check_grid("learning_rate", &self.learning_rate)?;
        check_grid("n_estimators", &self.n_estimators)?;
        check_grid("subsample", &self.subsample)?;
        check_grid("colsample_bytree", &self.colsample_bytree)?;
        check_grid("min_child_weight", &self.min_child_weight)?;
        Ok(())
    }

    /// Grid sizes in decode order.
    pub fn grid_sizes(&self) -> [usize; DIM] {
        [
            self.max_depth.len(),
            self.learning_rate.len(),
            self.n_estimators.len(),
            self.subsample.len(),
            self.colsample_bytree.len(),
            self.min_child_weight.len(),
        ]
    }

    /// Looks up the configuration at explicit per-grid indices.
    pub fn at_indices(&self, idx: [usize; DIM]) -> HyperParams {
        HyperParams {
            max_depth: self.max_depth[idx[0]],
            learning_rate: self.learning_rate[idx[1]],
            n_estimators: self.n_estimators[idx[2]],
            subsample: self.subsample[idx[3]],
            colsample_bytree: self.colsample_bytree[idx[4]],
            min_child_weight: self.min_child_weight[idx[5]],
        }
    }

    pub fn contains(&self, hp: &HyperParams) -> bool {
        self.max_depth.contains(&hp.max_depth)
            && self.learning_rate.contains(&hp.learning_rate)
            && self.n_estimators.contains(&hp.n_estimators)
            && self.subsample.contains(&hp.subsample)
            && self.colsample_bytree.contains(&hp.colsample_bytree)
            && self.min_child_weight.contains(&hp.min_child_weight)
    }
}

/// A point in `[0,1]^6`, the coordinate system shared by all optimizers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitPoint(pub [f64; DIM]);

impl UnitPoint {
    /// Clamps every component into `[0,1]`.
    pub fn clamped(&self) -> UnitPoint {
        UnitPoint(self.0.map(|u| u.clamp(0.0, 1.0)))
    }
}

/// Maps a unit coordinate onto an index of a grid with `m` values.
///
/// Index-space rounding gives every grid value an equal-width preimage, so
/// non-uniformly spaced grids (like the learning rates) are not biased
/// toward their dense regions.
fn unit_to_index(u: f64, m: usize) -> usize {
    let idx = (u.clamp(0.0, 1.0) * (m - 1) as f64).round() as usize;
    idx.min(m - 1)
}

/// Resolves a unit-cube point to the nearest grid configuration.
pub fn decode(u: &UnitPoint, space: &SearchSpace) -> HyperParams {
    let sizes = space.grid_sizes();
    let mut idx = [0usize; DIM];
    for d in 0..DIM {
        idx[d] = unit_to_index(u.0[d], sizes[d]);
    }
    space.at_indices(idx)
}

/// The canonical unit point whose `decode` lands on the given indices.
pub fn encode_indices(idx: [usize; DIM], space: &SearchSpace) -> UnitPoint {
    let sizes = space.grid_sizes();
    let mut u = [0.0; DIM];
    for d in 0..DIM {
        u[d] = if sizes[d] == 1 { 0.5 } else { idx[d] as f64 / (sizes[d] - 1) as f64 };
    }
    UnitPoint(u)
}

/// Draws each parameter uniformly over its grid, independently.
///
/// Uniformity is over grid *indices*, not via [`decode`]: under decode the
/// two endpoint values would receive half-width preimages and be sampled
/// half as often as interior values.
pub fn sample_uniform_with<R: Rng>(space: &SearchSpace, rng: &mut R) -> HyperParams {
    let sizes = space.grid_sizes();
    let mut idx = [0usize; DIM];
    for d in 0..DIM {
        idx[d] = rng.gen_range(0..sizes[d]);
    }
    space.at_indices(idx)
}

/// Seeded single draw; see [`sample_uniform_with`].
pub fn sample_uniform(space: &SearchSpace, rng_seed: u64) -> HyperParams {
    sample_uniform_with(space, &mut seeded_rng(rng_seed))
}
