//! Damped Newton baseline: solve `(H + lambda I) d = -J` with a dense
//! symmetric factorization and take `w + alpha d`. Indefinite systems raise
//! the damping by 10x and retry; a persistent failure is reported rather than
//! papered over. After each solve the trial point is evaluated on the same
//! batch and the step is kept only if it does not increase the batch
//! objective, lowering the damping on success and raising it on rejection.

use super::{Optimizer, OptimError, StepInfo, TrustRegionStats};
use crate::autodiff::{full_hessian, Batch, Problem};
use crate::numerics::{mat_vec, solve_symmetric, NumericsError, Tensor};

/// Damping used when an increase is requested from exactly zero.
const LAMBDA_SEED: f64 = 1e-6;
/// Rejections past this ceiling abort the run.
const LAMBDA_CEILING: f64 = 1e10;
const MAX_RETRIES: u32 = 10;

#[derive(Debug, Clone)]
pub struct LevenbergState {
    pub lambda: f64,
}

impl LevenbergState {
    pub fn new(lambda: f64) -> LevenbergState {
        assert!(lambda >= 0.0 && lambda.is_finite(), "damping must be finite and nonnegative");
        LevenbergState { lambda }
    }
}

fn raised(lambda: f64) -> f64 {
    if lambda == 0.0 {
        LAMBDA_SEED
    } else {
        lambda * 10.0
    }
}

pub fn levenberg_step(
    state: &mut LevenbergState,
    problem: &dyn Problem,
    w: &Tensor,
    batch: &Batch,
    alpha: f64,
) -> Result<(Tensor, StepInfo), OptimError> {
    let eval = problem.evaluate(w, batch);
    let g = eval.gradient();
    let h = full_hessian(problem, w, batch)?;
    let p = g.len();

    let neg_g = g.clone().scale(-1.0);
    let mut retries = 0;
    let direction = loop {
        let mut damped = h.clone();
        for i in 0..p {
            let v = damped.at(i, i) + state.lambda;
            damped.set(i, i, v);
        }
        match solve_symmetric(&damped, &neg_g) {
            Ok(d) if d.all_finite() => break d,
            Ok(_) | Err(NumericsError::NotPositiveDefinite { .. }) => {
                if retries == MAX_RETRIES {
                    return Err(OptimError::DampingExhausted {
                        retries,
                        lambda: state.lambda,
                    });
                }
                retries += 1;
                state.lambda = raised(state.lambda);
            }
            Err(other) => panic!("unexpected solver failure: {other}"),
        }
    };

    let lambda_used = state.lambda;
    let mut trial = w.clone();
    trial.axpy(alpha, &direction);
    let trial_eval = problem.evaluate(&trial, batch);
    let trial_loss = trial_eval.loss();

    // Quadratic-model drop for the trace: g.d + d(H + lambda I)d/2.
    let mut hd = mat_vec(&h, &direction);
    hd.axpy(lambda_used, &direction);
    let predicted = g.dot(&direction) + 0.5 * direction.dot(&hd);
    let actual = trial_loss - eval.loss();
    let trust = (predicted != 0.0).then(|| TrustRegionStats {
        gamma: actual / predicted,
        predicted,
        actual,
    });

    let accepted = trial_loss.is_finite() && trial_loss <= eval.loss();
    let passes = eval.counts() + trial_eval.counts();
    if accepted {
        state.lambda = lambda_used / 10.0;
    } else {
        state.lambda = raised(lambda_used);
        if state.lambda > LAMBDA_CEILING {
            return Err(OptimError::DampingExhausted { retries, lambda: state.lambda });
        }
    }

    let info = StepInfo {
        loss: eval.loss(),
        step_norm: if accepted { direction.norm() * alpha.abs() } else { 0.0 },
        beta: alpha,
        rho: 0.0,
        lambda: lambda_used,
        trust,
        passes,
    };
    Ok((if accepted { trial } else { w.clone() }, info))
}

/// Runner-facing wrapper owning the damping state.
#[derive(Debug, Clone)]
pub struct Levenberg {
    pub alpha: f64,
    state: LevenbergState,
}

impl Levenberg {
    pub fn new(alpha: f64, lambda0: f64) -> Levenberg {
        Levenberg { alpha, state: LevenbergState::new(lambda0) }
    }
}

impl Optimizer for Levenberg {
    fn name(&self) -> &str {
        "levenberg"
    }
    fn step(
        &mut self,
        problem: &dyn Problem,
        w: &Tensor,
        batch: &Batch,
    ) -> Result<(Tensor, StepInfo), OptimError> {
        levenberg_step(&mut self.state, problem, w, batch, self.alpha)
    }
}
