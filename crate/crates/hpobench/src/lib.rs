//! Benchmark harness comparing hyperparameter optimizers on a
//! gradient-boosted-tree hourly load forecaster.

pub mod cli;
pub mod data;
pub mod error;
pub mod features;
pub mod gbt;
pub mod metrics;
pub mod objective;
pub mod optim;
pub mod rng;
pub mod runner;
pub mod space;
pub mod stats;
pub mod svgplot;

pub use error::{Error, Result};
