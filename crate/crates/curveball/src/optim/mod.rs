//! Five optimizers behind one stepping interface.
//!
//! Each optimizer is a pair: a plain state struct plus a free stepping
//! function that consumes one evaluation batch and returns the next iterate
//! together with a [`StepInfo`] record. The [`Optimizer`] trait wraps the
//! pairs so the benchmark runner can drive any of them uniformly; the free
//! functions remain public because several invariants (heavy-ball reduction,
//! quadratic exactness) are stated directly in terms of them.

mod adam;
mod bfgs;
mod curveball;
mod levenberg;
mod sgd;

pub use adam::{adam_step, Adam, AdamState};
pub use bfgs::{bfgs_step, Bfgs, BfgsState};
pub use curveball::{
    auto_hyper, curveball_delta, curveball_step, lambda_update, AutoHyper, Curveball,
    CurveballConfig, CurveballState, Delta, HyperMode, HyperSolve, TrustRegionStats,
};
pub use levenberg::{levenberg_step, Levenberg, LevenbergState};
pub use sgd::{sgd_momentum_step, Sgd, SgdState};

use thiserror::Error;

use crate::autodiff::{AdError, Batch, PassCounts, Problem};
use crate::numerics::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    /// Damping grew past its ceiling without producing a solvable system.
    #[error("damping exhausted: lambda reached {lambda:.3e} after {retries} increases")]
    DampingExhausted { retries: u32, lambda: f64 },
    /// No step length satisfied the Wolfe conditions within the budget.
    #[error("line search failed after {evals} evaluations")]
    LineSearchFailed { evals: u32 },
    #[error(transparent)]
    Ad(#[from] AdError),
}

/// What a single step did, in trace-row form.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    /// Batch objective at the pre-step iterate.
    pub loss: f64,
    /// Euclidean norm of the parameter update.
    pub step_norm: f64,
    /// Step-size-like coefficient (beta, alpha, or line-search length).
    pub beta: f64,
    /// Momentum-like coefficient, zero where the method has none.
    pub rho: f64,
    /// Damping in effect, zero where the method has none.
    pub lambda: f64,
    /// Trust-region diagnostics, present only on steps that computed them.
    pub trust: Option<TrustRegionStats>,
    /// AD passes consumed by this step.
    pub passes: PassCounts,
}

impl StepInfo {
    pub fn gamma(&self) -> Option<f64> {
        self.trust.map(|t| t.gamma)
    }
}

/// Uniform stepping interface for the benchmark runner. Implementations own
/// their state and hyperparameters; the runner owns the iterate.
pub trait Optimizer: Send {
    fn name(&self) -> &str;

    /// Advances one iteration on the given batch, returning the new iterate.
    /// Recoverable failures (a rejected or failed step) return `Err` after
    /// restoring the state to something steppable; the caller keeps the old
    /// iterate and decides whether to continue.
    fn step(
        &mut self,
        problem: &dyn Problem,
        w: &Tensor,
        batch: &Batch,
    ) -> Result<(Tensor, StepInfo), OptimError>;
}
