//! Error type shared across the crate.

use thiserror::Error;

/// Unified error for data loading, model fitting, optimization, statistics,
/// and experiment orchestration.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("line {line}: {msg}")]
    ParseRow { line: usize, msg: String },

    #[error("bounds error: {0}")]
    Bounds(String),

    #[error("insufficient history: need more than {lag} rows, got {rows}")]
    InsufficientHistory { rows: usize, lag: usize },

    #[error("split error: {0}")]
    Split(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("shape error: expected {expected} columns, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("metric error: {0}")]
    Metric(String),

    #[error("stats error: {0}")]
    Stats(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("optimizer error: {0}")]
    Optim(String),

    #[error("plot error: {0}")]
    Plot(String),

    #[error("run error: {0}")]
    Run(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
