//! Momentum gradient descent: `z <- rho z - J(w)`, `w <- w + alpha z`. The
//! learning rate multiplies the velocity in the parameter update, not inside
//! the velocity update.

use super::{Optimizer, OptimError, StepInfo};
use crate::autodiff::{Batch, Problem};
use crate::numerics::Tensor;

#[derive(Debug, Clone)]
pub struct SgdState {
    /// Velocity buffer, one entry per parameter.
    pub z: Tensor,
}

impl SgdState {
    pub fn new(params: usize) -> SgdState {
        SgdState { z: Tensor::zeros(&[params]) }
    }
}

pub fn sgd_momentum_step(
    state: &mut SgdState,
    problem: &dyn Problem,
    w: &Tensor,
    batch: &Batch,
    alpha: f64,
    rho: f64,
) -> (Tensor, StepInfo) {
    assert!(alpha > 0.0, "learning rate must be positive");
    assert!((0.0..1.0).contains(&rho), "momentum must lie in [0, 1)");
    let eval = problem.evaluate(w, batch);
    let g = eval.gradient();

    // The exact update expressions matter: the second-order method with its
    // curvature term disabled must reproduce these iterates bit for bit.
    let z = state.z.data_mut();
    for (zi, gi) in z.iter_mut().zip(g.data()) {
        *zi = rho * *zi - gi;
    }
    let mut new_w = w.clone();
    let mut step_norm_sq = 0.0;
    for (wi, zi) in new_w.data_mut().iter_mut().zip(state.z.data()) {
        let dw = alpha * zi;
        *wi += dw;
        step_norm_sq += dw * dw;
    }

    let info = StepInfo {
        loss: eval.loss(),
        step_norm: step_norm_sq.sqrt(),
        beta: alpha,
        rho,
        lambda: 0.0,
        trust: None,
        passes: eval.counts(),
    };
    (new_w, info)
}

/// Runner-facing wrapper owning the velocity and hyperparameters.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub alpha: f64,
    pub rho: f64,
    state: SgdState,
}

impl Sgd {
    pub fn new(params: usize, alpha: f64, rho: f64) -> Sgd {
        Sgd { alpha, rho, state: SgdState::new(params) }
    }
}

impl Optimizer for Sgd {
    fn name(&self) -> &str {
        "sgd"
    }
    fn step(
        &mut self,
        problem: &dyn Problem,
        w: &Tensor,
        batch: &Batch,
    ) -> Result<(Tensor, StepInfo), OptimError> {
        Ok(sgd_momentum_step(&mut self.state, problem, w, batch, self.alpha, self.rho))
    }
}
