//! Adam with bias correction, exactly the standard form.

use super::{Optimizer, OptimError, StepInfo};
use crate::autodiff::{Batch, Problem};
use crate::numerics::Tensor;

#[derive(Debug, Clone)]
pub struct AdamState {
    /// First-moment estimate.
    pub m: Tensor,
    /// Second-moment estimate.
    pub v: Tensor,
    /// Completed timesteps.
    pub t: u64,
}

impl AdamState {
    pub fn new(params: usize) -> AdamState {
        AdamState { m: Tensor::zeros(&[params]), v: Tensor::zeros(&[params]), t: 0 }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn adam_step(
    state: &mut AdamState,
    problem: &dyn Problem,
    w: &Tensor,
    batch: &Batch,
    alpha: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> (Tensor, StepInfo) {
    let eval = problem.evaluate(w, batch);
    let g = eval.gradient();

    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);

    let mut new_w = w.clone();
    let mut step_norm_sq = 0.0;
    for i in 0..g.len() {
        let gi = g.data()[i];
        let mi = beta1 * state.m.data()[i] + (1.0 - beta1) * gi;
        let vi = beta2 * state.v.data()[i] + (1.0 - beta2) * gi * gi;
        state.m.data_mut()[i] = mi;
        state.v.data_mut()[i] = vi;
        let dw = -alpha * (mi / bias1) / ((vi / bias2).sqrt() + eps);
        new_w.data_mut()[i] += dw;
        step_norm_sq += dw * dw;
    }

    let info = StepInfo {
        loss: eval.loss(),
        step_norm: step_norm_sq.sqrt(),
        beta: alpha,
        rho: beta1,
        lambda: 0.0,
        trust: None,
        passes: eval.counts(),
    };
    (new_w, info)
}

/// Runner-facing wrapper with the conventional defaults.
#[derive(Debug, Clone)]
pub struct Adam {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    state: AdamState,
}

impl Adam {
    pub fn new(params: usize, alpha: f64) -> Adam {
        Adam { alpha, beta1: 0.9, beta2: 0.999, eps: 1e-8, state: AdamState::new(params) }
    }
}

impl Optimizer for Adam {
    fn name(&self) -> &str {
        "adam"
    }
    fn step(
        &mut self,
        problem: &dyn Problem,
        w: &Tensor,
        batch: &Batch,
    ) -> Result<(Tensor, StepInfo), OptimError> {
        Ok(adam_step(
            &mut self.state,
            problem,
            w,
            batch,
            self.alpha,
            self.beta1,
            self.beta2,
            self.eps,
        ))
    }
}
