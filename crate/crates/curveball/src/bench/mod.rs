//! Experiment harness: JSON-configured repeated runs with per-run derived
//! seed streams, grid search over learning rates, per-step cost measurement,
//! CSV emission, and a self-check suite.
//!
//! Determinism contract: a `(configuration, seed)` pair fixes every emitted
//! byte. Run `i` of an experiment always draws from stream `i` derived from
//! the root seed, so results are independent of scheduling; the dataset is
//! built from its own reserved stream, so every optimizer sees the same
//! problem.

pub mod config;
pub mod cost;
pub mod csvio;
pub mod grid;
pub mod runner;
pub mod verify;

pub use config::{load_config, ExperimentConfig, HyperSpec, OptimizerSpec, ProblemSpec};
pub use cost::{measure_cost, CostEntry, CostReport};
pub use csvio::{summary_csv, trace_csv};
pub use grid::{grid_search, GridOutcome};
pub use runner::{
    run_experiment, train_fixed_iterations, ExperimentOutput, ExperimentResult, RunStatus,
    RunTrace, TraceRow,
};
pub use verify::{verify, VerifyReport};

use std::io;
use thiserror::Error;

use config::ConfigError;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("csv parse error at line {line}: {message}")]
    CsvParse { line: usize, message: String },
    /// Grid search found no hyperparameter setting meeting the convergence
    /// bar; `rate` is the best rate seen across the `points` evaluated.
    #[error(
        "no grid point converged reliably (best rate {rate:.2} over {points} settings)"
    )]
    NoConvergentSetting { rate: f64, points: usize },
}
