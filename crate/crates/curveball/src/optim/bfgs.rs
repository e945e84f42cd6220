//! BFGS on the inverse Hessian approximation with a strong-Wolfe line search
//! using cubic interpolation. All evaluations within one step share the
//! step's batch, so the search minimizes a fixed subsampled objective.

use super::{Optimizer, OptimError, StepInfo};
use crate::autodiff::{Batch, PassCounts, Problem};
use crate::numerics::{mat_vec, Tensor};

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_EVALS: u32 = 25;
/// Curvature pairs with `s.y` at or below this relative threshold are skipped.
const CURVATURE_FLOOR: f64 = 1e-10;
/// Keep interpolating past the first Wolfe point until the slope has shrunk
/// by this factor: near-exact searches preserve the conjugate-direction
/// character of the updates (exact searches terminate on quadratics).
const REFINE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct BfgsState {
    /// Inverse Hessian approximation, `p x p`, symmetric.
    b: Tensor,
    /// Previous iterate and its gradient, for the (s, y) curvature pair.
    prev: Option<(Tensor, Tensor)>,
}

impl BfgsState {
    pub fn new(params: usize) -> BfgsState {
        BfgsState { b: identity(params), prev: None }
    }

    /// Drops all curvature information; the next step is steepest descent.
    pub fn reset(&mut self) {
        let p = self.b.rows();
        self.b = identity(p);
        self.prev = None;
    }

    pub fn matrix(&self) -> &Tensor {
        &self.b
    }
}

fn identity(p: usize) -> Tensor {
    let mut m = Tensor::zeros(&[p, p]);
    for i in 0..p {
        m.set(i, i, 1.0);
    }
    m
}

#[derive(Clone)]
struct Probe {
    t: f64,
    phi: f64,
    dphi: f64,
}

struct Search<'a> {
    problem: &'a dyn Problem,
    w: &'a Tensor,
    batch: &'a Batch,
    d: &'a Tensor,
    phi0: f64,
    dphi0: f64,
    evals: u32,
    passes: PassCounts,
    /// Lowest strong-Wolfe point seen so far; returned if refinement runs
    /// out of budget before the slope target is met.
    best: Option<Probe>,
}

impl Search<'_> {
    fn probe(&mut self, t: f64) -> Probe {
        let mut x = self.w.clone();
        x.axpy(t, self.d);
        let eval = self.problem.evaluate(&x, self.batch);
        let phi = eval.loss();
        let dphi = eval.gradient().dot(self.d);
        self.passes = self.passes + eval.counts();
        self.evals += 1;
        let probe = Probe { t, phi, dphi };
        if probe.phi.is_finite() && self.sufficient_decrease(&probe) && self.curvature_ok(&probe) {
            let improved = self.best.as_ref().map_or(true, |b| probe.phi < b.phi);
            if improved {
                self.best = Some(probe.clone());
            }
        }
        probe
    }

    fn sufficient_decrease(&self, p: &Probe) -> bool {
        p.phi <= self.phi0 + C1 * p.t * self.dphi0
    }

    fn curvature_ok(&self, p: &Probe) -> bool {
        p.dphi.abs() <= -C2 * self.dphi0
    }

    /// Wolfe holds and the slope is flat enough to stop refining.
    fn converged(&self, p: &Probe) -> bool {
        p.phi.is_finite()
            && self.sufficient_decrease(p)
            && self.curvature_ok(p)
            && p.dphi.abs() <= REFINE * self.dphi0.abs()
    }

    fn finish(&mut self) -> Result<Probe, OptimError> {
        match self.best.take() {
            Some(p) => Ok(p),
            None => Err(OptimError::LineSearchFailed { evals: self.evals }),
        }
    }

    /// Bracketing phase: expand until the minimum is bracketed or the slope
    /// target is hit.
    fn run(&mut self) -> Result<Probe, OptimError> {
        let mut prev = Probe { t: 0.0, phi: self.phi0, dphi: self.dphi0 };
        let mut t = 1.0_f64;
        let mut first = true;
        loop {
            if self.evals >= MAX_EVALS || !t.is_finite() {
                return self.finish();
            }
            let cur = self.probe(t);
            if !cur.phi.is_finite() || !self.sufficient_decrease(&cur) || (!first && cur.phi >= prev.phi)
            {
                return self.zoom(prev, cur);
            }
            if self.converged(&cur) {
                return Ok(cur);
            }
            if cur.dphi >= 0.0 {
                return self.zoom(cur, prev);
            }
            t = cur.t * 2.0;
            prev = cur;
            first = false;
        }
    }

    /// Refinement phase: `lo` always satisfies sufficient decrease and the
    /// interval `[lo, hi]` brackets a strong-Wolfe point.
    fn zoom(&mut self, mut lo: Probe, mut hi: Probe) -> Result<Probe, OptimError> {
        loop {
            let width = (hi.t - lo.t).abs();
            if self.evals >= MAX_EVALS || width <= 1e-14 * lo.t.abs().max(1.0) {
                return self.finish();
            }
            let cur = self.probe(cubic_trial(&lo, &hi));
            if self.converged(&cur) {
                return Ok(cur);
            }
            if !cur.phi.is_finite() || !self.sufficient_decrease(&cur) || cur.phi >= lo.phi {
                hi = cur;
            } else {
                if cur.dphi * (hi.t - lo.t) >= 0.0 {
                    hi = Probe { t: lo.t, phi: lo.phi, dphi: lo.dphi };
                }
                lo = cur;
            }
        }
    }
}

/// Minimizer of the cubic fitting both endpoint values and slopes, nudged off
/// the interval ends; falls back to bisection when the fit is degenerate.
fn cubic_trial(a: &Probe, b: &Probe) -> f64 {
    let midpoint = 0.5 * (a.t + b.t);
    let d1 = a.dphi + b.dphi - 3.0 * (a.phi - b.phi) / (a.t - b.t);
    let disc = d1 * d1 - a.dphi * b.dphi;
    if disc < 0.0 || !disc.is_finite() {
        return midpoint;
    }
    let d2 = disc.sqrt().copysign(b.t - a.t);
    let denom = b.dphi - a.dphi + 2.0 * d2;
    if denom == 0.0 {
        return midpoint;
    }
    let t = b.t - (b.t - a.t) * (b.dphi + d2 - d1) / denom;
    let (left, right) = if a.t < b.t { (a.t, b.t) } else { (b.t, a.t) };
    let pad = 1e-3 * (right - left);
    if !t.is_finite() || t <= left + pad || t >= right - pad {
        midpoint
    } else {
        t
    }
}

pub fn bfgs_step(
    state: &mut BfgsState,
    problem: &dyn Problem,
    w: &Tensor,
    batch: &Batch,
) -> Result<(Tensor, StepInfo), OptimError> {
    let eval = problem.evaluate(w, batch);
    let g = eval.gradient().clone();
    let p = g.len();

    // Fold in the curvature pair from the previous accepted step; skip the
    // update when s.y is too small to keep B positive definite.
    if let Some((pw, pg)) = state.prev.take() {
        let mut s = w.clone();
        s.axpy(-1.0, &pw);
        let mut y = g.clone();
        y.axpy(-1.0, &pg);
        let sy = s.dot(&y);
        if sy > CURVATURE_FLOOR * s.norm() * y.norm() {
            let by = mat_vec(&state.b, &y);
            let yby = y.dot(&by);
            let r = 1.0 / sy;
            let coeff = (1.0 + yby * r) * r;
            let (s, by) = (s.data(), by.data());
            for i in 0..p {
                for j in 0..p {
                    let v = state.b.at(i, j) - (s[i] * by[j] + by[i] * s[j]) * r
                        + coeff * (s[i] * s[j]);
                    state.b.set(i, j, v);
                }
            }
        }
    }

    let d = mat_vec(&state.b, &g).scale(-1.0);
    let dphi0 = d.dot(&g);
    if !(dphi0 < 0.0) {
        return Err(OptimError::LineSearchFailed { evals: 0 });
    }

    let mut search = Search {
        problem,
        w,
        batch,
        d: &d,
        phi0: eval.loss(),
        dphi0,
        evals: 0,
        passes: eval.counts(),
        best: None,
    };
    let accepted = search.run()?;

    let mut new_w = w.clone();
    new_w.axpy(accepted.t, &d);
    state.prev = Some((w.clone(), g));

    let info = StepInfo {
        loss: eval.loss(),
        step_norm: accepted.t * d.norm(),
        beta: accepted.t,
        rho: 0.0,
        lambda: 0.0,
        trust: None,
        passes: search.passes,
    };
    Ok((new_w, info))
}

/// Runner-facing wrapper; a failed line search resets the state to steepest
/// descent before the error is reported.
#[derive(Debug, Clone)]
pub struct Bfgs {
    state: BfgsState,
}

impl Bfgs {
    pub fn new(params: usize) -> Bfgs {
        Bfgs { state: BfgsState::new(params) }
    }
}

impl Optimizer for Bfgs {
    fn name(&self) -> &str {
        "bfgs"
    }
    fn step(
        &mut self,
        problem: &dyn Problem,
        w: &Tensor,
        batch: &Batch,
    ) -> Result<(Tensor, StepInfo), OptimError> {
        match bfgs_step(&mut self.state, problem, w, batch) {
            Ok(out) => Ok(out),
            Err(err) => {
                self.state.reset();
                Err(err)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use crate::problems::{make_blobs, make_mlp, Activation, Quadratic};

    #[test]
    fn first_step_is_steepest_descent() {
        let mut rng = Rng::new(21);
        let problem = Quadratic::random_spd(4, &mut rng);
        let w = problem.initial_point(&mut rng);
        let g = problem.evaluate(&w, &Batch::Full).gradient().clone();
        let mut state = BfgsState::new(4);
        let (new_w, info) = bfgs_step(&mut state, &problem, &w, &Batch::Full).unwrap();
        let mut step = new_w;
        step.axpy(-1.0, &w);
        // step = -t g for the accepted t.
        for (si, gi) in step.data().iter().zip(g.data()) {
            assert!((si + info.beta * gi).abs() <= 1e-12 * gi.abs().max(1.0));
        }
    }

    #[test]
    fn quadratic_converges_within_seven_iterations() {
        let mut rng = Rng::new(22);
        let problem = Quadratic::random_spd(5, &mut rng);
        let mut w = problem.initial_point(&mut rng);
        let mut state = BfgsState::new(5);
        let mut history = Vec::new();
        for _ in 0..7 {
            let (next, _) = bfgs_step(&mut state, &problem, &w, &Batch::Full).unwrap();
            w = next;
            history.push(problem.evaluate(&w, &Batch::Full).gradient().norm());
            if *history.last().unwrap() < 1e-8 {
                break;
            }
        }
        let gnorm = *history.last().unwrap();
        assert!(gnorm < 1e-8, "gradient norms {history:?}");
    }

    #[test]
    fn approximation_stays_symmetric_under_noisy_steps() {
        let mut rng = Rng::new(23);
        let data = make_blobs(3, 40, 2, 3.0, &mut rng);
        let problem = make_mlp(&[4, 3], Activation::Tanh, data, &mut rng)
            .unwrap()
            .with_batch_size(16);
        let p = problem.param_count();
        let mut state = BfgsState::new(p);
        let mut w = problem.initial_point(&mut rng);
        let mut applied = 0;
        for _ in 0..100 {
            let batch = problem.sample_batch(&mut rng);
            match bfgs_step(&mut state, &problem, &w, &batch) {
                Ok((next, _)) => {
                    w = next;
                    applied += 1;
                }
                Err(_) => state.reset(),
            }
        }
        assert!(applied > 50, "line search failed too often ({applied}/100)");
        let b = state.matrix();
        let mut asym: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..p {
            for j in 0..p {
                asym = asym.max((b.at(i, j) - b.at(j, i)).abs());
                scale = scale.max(b.at(i, j).abs());
            }
        }
        assert!(asym <= 1e-10 * scale, "asymmetry {asym} at scale {scale}");
    }

    /// Constructs two shifted quadratics so the (s, y) pair is exactly
    /// orthogonal on the second step: the update must be skipped.
    #[test]
    fn update_skipped_when_curvature_condition_fails() {
        let eye = {
            let mut m = Tensor::zeros(&[2, 2]);
            m.set(0, 0, 1.0);
            m.set(1, 1, 1.0);
            m
        };
        // f_c(w) = |w - c|^2/2 via H = I, b = -c.
        let quadratic_at = |c: &[f64]| {
            Quadratic::new(eye.clone(), Tensor::vector(c.iter().map(|x| -x).collect()))
        };

        let w0 = Tensor::vector(vec![2.0, 1.0]);
        let f1 = quadratic_at(&[0.0, 0.0]);
        let mut state = BfgsState::new(2);
        let (w1, _) = bfgs_step(&mut state, &f1, &w0, &Batch::Full).unwrap();
        let b_before = state.matrix().clone();

        let s = [w1.data()[0] - w0.data()[0], w1.data()[1] - w0.data()[1]];
        // Choose the next target so y = (w1 - c2) - (w0 - c1) is orthogonal
        // to s: c2 = c1 + s - perp(s).
        let c2 = [s[0] + s[1], s[1] - s[0]];
        let f2 = quadratic_at(&c2);
        let _ = bfgs_step(&mut state, &f2, &w1, &Batch::Full);
        assert_eq!(state.matrix().data(), b_before.data(), "update was not skipped");

        // Control: on anisotropic curvature the same two-step sequence does
        // change B (with H = I the update is a fixed point, B' = B = I).
        let mut aniso = Tensor::zeros(&[2, 2]);
        aniso.set(0, 0, 1.0);
        aniso.set(1, 1, 4.0);
        let f3 = Quadratic::new(aniso, Tensor::zeros(&[2]));
        let mut state2 = BfgsState::new(2);
        let (w1b, _) = bfgs_step(&mut state2, &f3, &w0, &Batch::Full).unwrap();
        let b_mid = state2.matrix().clone();
        let _ = bfgs_step(&mut state2, &f3, &w1b, &Batch::Full);
        assert_ne!(state2.matrix().data(), b_mid.data(), "control update did not apply");
    }

    #[test]
    fn zero_gradient_reports_immediate_line_search_failure() {
        // At the minimum the direction has no slope left to search along.
        let problem = Quadratic::scalar(1.0);
        let mut state = BfgsState::new(1);
        let w = Tensor::vector(vec![0.0]);
        match bfgs_step(&mut state, &problem, &w, &Batch::Full) {
            Err(OptimError::LineSearchFailed { evals: 0 }) => {}
            other => panic!("expected immediate failure, got {other:?}"),
        }
    }
}
