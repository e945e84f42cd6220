//! Second-order stepper built around a persistent update buffer `z`. Each
//! iteration takes one curvature-aware step `z <- rho z - beta d` and
//! immediately applies `w <- w + alpha z`. The direction `d` and the pair
//! (beta, rho) depend on the mode:
//!
//! * Fixed hyperparameters: `d = (H + lambda I) z + J`, one incremental
//!   descent step on the damped Newton system, computed in one forward-mode
//!   and one reverse-mode pass.
//! * Automatic hyperparameters: `d = J`, with (beta, rho) solving the 2x2
//!   normal equations that minimize the damped quadratic model over the
//!   plane spanned by the previous step `z` and the gradient. On a fixed
//!   quadratic this recurrence is a locally optimal momentum method: it
//!   generates conjugate directions and terminates in at most `p` steps.
//!   The curvature enters through Gauss-Newton inner products of
//!   output-space projections, so a step costs exactly two forward-mode
//!   passes and one reverse-mode pass.
//!
//! Every few steps the model quality ratio
//! `gamma = (f(w+z) - f(w)) / fhat(z)` rescales the damping.

use super::{Optimizer, OptimError, StepInfo};
use crate::autodiff::{Batch, Evaluation, Problem, Projection};
use crate::numerics::{solve_2x2, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HyperMode {
    /// Solve for (beta, rho) each step.
    Auto,
    /// Use the given pair verbatim.
    Fixed { beta: f64, rho: f64 },
}

#[derive(Debug, Clone)]
pub struct CurveballConfig {
    pub lambda0: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Multiplier applied when the quadratic fit is better than expected;
    /// its inverse applies when the fit is poor.
    pub lambda_factor: f64,
    /// Trust-region cadence: evaluate gamma every this many steps.
    pub trust_interval: u64,
    pub hyper: HyperMode,
    /// When false, skip curvature entirely (no forward-mode passes); the
    /// direction is the plain gradient and the method degenerates to
    /// momentum descent.
    pub curvature: bool,
    /// Include the damping term in the quadratic model the automatic pair
    /// minimizes, matching the damped system the buffer tracks. The
    /// undamped alternative treats lambda as a direction-only regularizer.
    pub damped_hyper: bool,
    /// Last-resort step size when the fallback denominator is not positive.
    pub beta_default: f64,
}

impl Default for CurveballConfig {
    fn default() -> CurveballConfig {
        CurveballConfig {
            lambda0: 10.0,
            lambda_min: 1e-8,
            lambda_max: 1e10,
            lambda_factor: 0.999,
            trust_interval: 5,
            hyper: HyperMode::Auto,
            curvature: true,
            damped_hyper: true,
            beta_default: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CurveballState {
    /// Persistent update buffer, applied to the parameters each step.
    pub z: Tensor,
    pub lambda: f64,
    /// Parameter-update scale; the default of 1 is load-bearing for the
    /// reduction to momentum descent.
    pub alpha: f64,
    pub step_counter: u64,
    /// Most recent (beta, rho), for traces.
    pub last_hyper: AutoHyper,
}

impl CurveballState {
    pub fn new(params: usize, config: &CurveballConfig) -> CurveballState {
        CurveballState {
            z: Tensor::zeros(&[params]),
            lambda: config.lambda0,
            alpha: 1.0,
            step_counter: 0,
            last_hyper: AutoHyper { beta: 0.0, rho: 0.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AutoHyper {
    pub beta: f64,
    pub rho: f64,
}

/// Quadratic-fit diagnostics from a trust-region check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRegionStats {
    /// actual / predicted; 1 means the quadratic model was exact.
    pub gamma: f64,
    /// Model drop `fhat(z)`.
    pub predicted: f64,
    /// Measured drop `f(w + z) - f(w)` on the same batch.
    pub actual: f64,
}

/// One step's system update, bundling the evaluation with the cached
/// output-space projection of `z` so later stages reuse them.
pub struct Delta {
    eval: Evaluation,
    proj_z: Option<Projection>,
    dz: Tensor,
}

impl Delta {
    pub fn dz(&self) -> &Tensor {
        &self.dz
    }
    pub fn eval(&self) -> &Evaluation {
        &self.eval
    }
}

/// Computes `dz = H z + J + lambda z` in one forward-mode and one
/// reverse-mode pass, caching the projection of `z` for reuse.
pub fn curveball_delta(
    problem: &dyn Problem,
    w: &Tensor,
    batch: &Batch,
    state: &CurveballState,
    config: &CurveballConfig,
) -> Delta {
    let eval = problem.evaluate(w, batch);
    if !config.curvature {
        let dz = eval.gradient().clone();
        return Delta { eval, proj_z: None, dz };
    }
    let proj_z = eval.project(&state.z);
    let mut dz = eval.residual_from(&proj_z);
    dz.axpy(state.lambda, &state.z);
    Delta { eval, proj_z: Some(proj_z), dz }
}

/// The solved hyperparameters plus the output-space projections of `z` and
/// the gradient computed on the way (the two forward-mode passes of the
/// step), cached for the trust-region check.
pub struct HyperSolve {
    pub hyper: AutoHyper,
    pub fell_back: bool,
    proj_z: Option<Projection>,
    proj_g: Option<Projection>,
}

/// Minimizes `fhat(rho z - beta g)` over (beta, rho), where `g` is the
/// current gradient and `fhat(d) = J.d + d.Ht.d / 2` with
/// `Ht = H + lambda I` by default (`Ht = H` when damping is excluded from
/// the model). Stationarity gives the 2x2 system
///
/// ```text
/// [  g.Ht.g   -z.Ht.g ] [beta]   [ J.g]
/// [ -z.Ht.g    z.Ht.z ] [rho ] = [-J.z]
/// ```
///
/// Spanning the plane with the previous step and the gradient makes the
/// recurrence locally optimal momentum descent in the curvature metric; on
/// a fixed quadratic the iterates coincide with conjugate-direction ones.
/// The solution is accepted only when the system is positive definite, so
/// the returned pair is a minimizer of the restricted model rather than a
/// saddle; otherwise (always on the first step, where z = 0) the solve
/// falls back to the 1-D model minimizer along the gradient, guarded
/// against nonpositive curvature.
pub fn auto_hyper(
    eval: &Evaluation,
    z: &Tensor,
    lambda: f64,
    config: &CurveballConfig,
) -> HyperSolve {
    let g = eval.gradient();
    let lam = if config.damped_hyper { lambda } else { 0.0 };

    let (proj_z, proj_g, gg_h, zg_h, zz_h) = if config.curvature {
        let pz = eval.project(z);
        let pg = eval.project(g);
        let gg = eval.curvature_inner(&pg, &pg);
        let zg = eval.curvature_inner(&pz, &pg);
        let zz = eval.curvature_inner(&pz, &pz);
        (Some(pz), Some(pg), gg, zg, zz)
    } else {
        (None, None, 0.0, 0.0, 0.0)
    };
    let dd = gg_h + lam * g.dot(g);
    let zd = zg_h + lam * z.dot(g);
    let zz = zz_h + lam * z.dot(z);
    let j_g = g.dot(g);
    let j_z = g.dot(z);

    let a = [[dd, -zd], [-zd, zz]];
    let rhs = [j_g, -j_z];
    // Positive leading minors certify the plane model has a minimum. An
    // indefinite system still has a stationary point, but stepping to a
    // saddle can move arbitrarily far uphill.
    let definite = dd > 0.0 && dd * zz - zd * zd > 0.0;
    let solved = if definite {
        match solve_2x2(&a, &rhs) {
            Ok([beta, rho]) if beta.is_finite() && rho.is_finite() => {
                Some(AutoHyper { beta, rho })
            }
            _ => None,
        }
    } else {
        None
    };
    let (hyper, fell_back) = match solved {
        Some(h) => (h, false),
        None => {
            let beta = if dd.is_finite() && dd > 0.0 { j_g / dd } else { config.beta_default };
            let beta = if beta.is_finite() { beta } else { config.beta_default };
            (AutoHyper { beta, rho: 0.0 }, true)
        }
    };
    HyperSolve { hyper, fell_back, proj_z, proj_g }
}

/// Value of the local model `fhat(v) = J.v + v.(H + lambda I).v / 2` for a
/// parameter-space vector with a cached projection.
pub fn model_value(eval: &Evaluation, proj: &Projection, lambda: f64) -> f64 {
    let v = proj.source();
    eval.gradient_inner(proj) + 0.5 * (eval.curvature_inner(proj, proj) + lambda * v.dot(v))
}

/// Applies the damping schedule for a measured quality ratio and returns the
/// clamped new value.
pub fn lambda_update(state: &mut CurveballState, gamma: f64, config: &CurveballConfig) -> f64 {
    let mut lambda = state.lambda;
    if gamma > 1.5 {
        lambda *= config.lambda_factor;
    } else if gamma < 0.5 {
        lambda /= config.lambda_factor;
    }
    state.lambda = lambda.clamp(config.lambda_min, config.lambda_max);
    state.lambda
}

pub fn curveball_step(
    state: &mut CurveballState,
    problem: &dyn Problem,
    w: &Tensor,
    batch: &Batch,
    config: &CurveballConfig,
) -> (Tensor, StepInfo) {
    let lambda_used = state.lambda;

    let (eval, direction, proj_z, proj_dir, hyper) = match config.hyper {
        HyperMode::Fixed { beta, rho } => {
            let Delta { eval, proj_z, dz } = curveball_delta(problem, w, batch, state, config);
            (eval, dz, proj_z, None, AutoHyper { beta, rho })
        }
        HyperMode::Auto => {
            let eval = problem.evaluate(w, batch);
            let solve = auto_hyper(&eval, &state.z, lambda_used, config);
            let direction = eval.gradient().clone();
            (eval, direction, solve.proj_z, solve.proj_g, solve.hyper)
        }
    };
    state.last_hyper = hyper;
    let (beta, rho) = (hyper.beta, hyper.rho);

    // The exact update expressions matter: with the curvature term disabled
    // these iterates must match momentum descent bit for bit.
    for (zi, di) in state.z.data_mut().iter_mut().zip(direction.data()) {
        *zi = rho * *zi - beta * di;
    }

    state.step_counter += 1;
    let mut passes = eval.counts();
    let mut trust = None;
    if config.curvature && state.step_counter % config.trust_interval == 0 {
        let proj_dir = proj_dir.unwrap_or_else(|| eval.project(&direction));
        let proj_z = proj_z.as_ref().expect("curvature is enabled");
        let proj_new = Projection::combine(rho, proj_z, -beta, &proj_dir);
        // The quality ratio scores the damped model the update minimizes;
        // using the same model keeps gamma near one when the fit is good.
        let predicted = model_value(&eval, &proj_new, lambda_used);
        if predicted != 0.0 {
            let mut trial = w.clone();
            trial.axpy(1.0, &state.z);
            let trial_eval = problem.evaluate(&trial, batch);
            passes = passes + trial_eval.counts();
            let actual = trial_eval.loss() - eval.loss();
            let gamma = actual / predicted;
            lambda_update(state, gamma, config);
            trust = Some(TrustRegionStats { gamma, predicted, actual });
        }
    }

    let mut new_w = w.clone();
    let mut step_norm_sq = 0.0;
    let alpha = state.alpha;
    for (wi, zi) in new_w.data_mut().iter_mut().zip(state.z.data()) {
        let dw = alpha * zi;
        *wi += dw;
        step_norm_sq += dw * dw;
    }

    let info = StepInfo {
        loss: eval.loss(),
        step_norm: step_norm_sq.sqrt(),
        beta,
        rho,
        lambda: lambda_used,
        trust,
        passes,
    };
    (new_w, info)
}

/// Runner-facing wrapper owning state and configuration.
#[derive(Debug, Clone)]
pub struct Curveball {
    config: CurveballConfig,
    state: CurveballState,
}

impl Curveball {
    pub fn new(params: usize, config: CurveballConfig) -> Curveball {
        let state = CurveballState::new(params, &config);
        Curveball { config, state }
    }

    pub fn state(&self) -> &CurveballState {
        &self.state
    }
}

impl Optimizer for Curveball {
    fn name(&self) -> &str {
        "curveball"
    }
    fn step(
        &mut self,
        problem: &dyn Problem,
        w: &Tensor,
        batch: &Batch,
    ) -> Result<(Tensor, StepInfo), OptimError> {
        Ok(curveball_step(&mut self.state, problem, w, batch, &self.config))
    }
}
