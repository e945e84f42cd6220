//! Minimal automatic differentiation: a tape of tensor-level primitives with
//! reverse (vector-Jacobian) and forward (Jacobian-vector) sweeps, closed-form
//! loss curvature, and the composed Gauss-Newton Hessian-vector product.
//!
//! The convention throughout: the model Jacobian maps output-space vectors to
//! parameter space. [`jvp`] produces output-space vectors (directional
//! derivatives of the outputs), [`vjp`] produces parameter-space vectors
//! (back-propagated cotangents). The Gauss-Newton product composes them
//! around the loss curvature: `vjp(loss_curvature(jvp(v)))`, costing exactly
//! one forward-tangent and one reverse pass.

mod hessian;
mod loss;
mod problem;
mod tape;

pub use hessian::{brute_force_gauss_newton, full_hessian, FD_HESSIAN_CAP, HESSIAN_CAP};
pub use loss::{loss_hessian_product, LossCurvature, LossKind, LossTarget};
pub use problem::{
    gauss_newton_hvp, jvp, vjp, AnalyticObjective, Batch, ConvergenceMetric, Evaluation,
    PassCounts, Problem, Projection,
};
pub use tape::{NodeId, Tape};

use thiserror::Error;

/// Differentiation failures a caller can react to. Shape misuse panics.
#[derive(Debug, Error, PartialEq)]
pub enum AdError {
    /// The loss kind has no curvature product (scalar objectives expose their
    /// analytic Hessian instead of a Gauss-Newton split).
    #[error("loss kind {kind:?} has no curvature product")]
    UnsupportedLoss { kind: LossKind },
    /// A dense Hessian was requested above the configured cap.
    #[error("dense Hessian of {params} parameters exceeds the cap of {cap}")]
    TooLarge { params: usize, cap: usize },
}
