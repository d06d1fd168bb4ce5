//! Regret benchmark for ML-II versus fully Bayesian optimisation on the
//! Ackley function: objective, seeded suite runner, aggregation and
//! CSV/JSON outputs.

pub mod aggregate;
pub mod config;
pub mod objective;
pub mod records;
pub mod suite;

pub use aggregate::{aggregate_percentiles, emit_histogram, HistogramBin, PercentileRow};
pub use config::{FileConfig, SeedRange, SuiteConfig};
pub use objective::{ackley, ackley_bounds, initial_point, ACKLEY_MIN};
pub use records::{RegretRecord, RunError};
pub use suite::{run_suite, SuiteReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] fbo_core::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;
