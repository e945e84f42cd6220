//! Benchmark objectives.
//!
//! Four families: a two-parameter stochastic valley with an analytic Hessian,
//! random positive definite quadratics, a two-layer linear network fitting an
//! ill-conditioned target map, and a multilayer perceptron classifier fed by
//! synthetic clusters or IDX-format files.

mod dataset;
mod idx;
mod linear_net;
mod mlp;
mod quadratic;
mod rosenbrock;

pub use dataset::{make_blobs, Dataset};
pub use idx::{load_idx, IdxError};
pub use linear_net::{make_rahimi_recht, LinearNet};
pub use mlp::{make_mlp, Activation, Mlp};
pub use quadratic::Quadratic;
pub use rosenbrock::{rosenbrock, Rosenbrock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error("invalid dimension: {0}")]
    InvalidDim(String),
}

/// Multiplicative noise interval for stochastic objectives; `(1, 1)` recovers
/// the deterministic function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub lo: f64,
    pub hi: f64,
}

impl NoiseSpec {
    pub fn new(lo: f64, hi: f64) -> Result<Self, ProblemError> {
        if !(lo <= hi) {
            return Err(ProblemError::InvalidDim(format!(
                "noise interval [{lo}, {hi}] is inverted"
            )));
        }
        Ok(NoiseSpec { lo, hi })
    }

    pub const DETERMINISTIC: NoiseSpec = NoiseSpec { lo: 1.0, hi: 1.0 };

    pub fn is_deterministic(&self) -> bool {
        self.lo == self.hi
    }
}
