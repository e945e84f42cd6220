//! Dense tensors, deterministic random numbers, and small solvers.

mod linalg;
mod rng;
mod tensor;

pub use linalg::{
    condition_estimate, mat_vec, matmul, matmul_nt, matmul_tn, solve_2x2, solve_symmetric,
    SYMMETRIC_SOLVE_CAP,
};
pub use rng::Rng;
pub use tensor::Tensor;

use thiserror::Error;

/// Failures of the numeric kernels that callers can meaningfully react to.
/// Structural misuse (shape mismatches, out-of-range indices) panics instead.
#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    /// The 2x2 system's determinant is negligible relative to its entries.
    #[error("2x2 system is singular (|det| = {det:.3e})")]
    SingularSystem { det: f64 },
    /// Cholesky factorization hit a non-positive or non-finite pivot.
    #[error("matrix is not positive definite (pivot {pivot:.3e} at index {index})")]
    NotPositiveDefinite { pivot: f64, index: usize },
    /// A sampling interval with `lo > hi` was requested.
    #[error("invalid sampling range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },
}
