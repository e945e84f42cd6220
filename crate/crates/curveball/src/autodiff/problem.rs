//! The objective abstraction optimizers consume, and the per-evaluation
//! differentiation interface.
//!
//! A [`Problem`] owns its data and is immutable after construction; all
//! randomness (initial points, batch draws) flows through explicit RNG
//! arguments. Calling [`Problem::evaluate`] at a parameter vector and batch
//! yields an [`Evaluation`]: a snapshot that can answer derivative queries
//! about that one point. Two flavors exist behind the same interface:
//!
//! * taped: the forward computation was recorded on a [`Tape`]; derivative
//!   queries run tangent or reverse sweeps over it, with the loss handled in
//!   closed form outside the tape;
//! * analytic: scalar objectives (and structured problems where closed forms
//!   are far cheaper) supply loss, gradient, and curvature products directly.
//!
//! Every evaluation counts the differentiation passes it performs
//! ([`PassCounts`]); the benchmark harness sums these to enforce the per-step
//! cost contract of the second-order optimizer.

use std::cell::{Cell, OnceCell};

use super::loss::{self, LossCurvature, LossKind, LossTarget};
use super::tape::{NodeId, Tape};
use super::AdError;
use crate::numerics::{Rng, Tensor};

/// What an optimizer evaluates the objective on.
#[derive(Debug, Clone, PartialEq)]
pub enum Batch {
    /// All samples the problem owns (deterministic problems use this).
    Full,
    /// A minibatch given by row indices into the dataset.
    Indices(Vec<usize>),
    /// A multiplicative noise draw; the whole evaluation (value, gradient,
    /// curvature) shares this one draw.
    Noise(f64),
}

/// How the harness declares convergence for this problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvergenceMetric {
    /// Noise-free loss at or below the tolerance.
    Absolute,
    /// Noise-free loss relative to its value at the initial point.
    RelativeToStart,
}

/// Cumulative differentiation passes performed by one evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PassCounts {
    /// Objective evaluations (tape recordings or analytic value computations).
    pub forward: u64,
    /// Forward-tangent passes (directional derivatives, curvature products).
    pub fmad: u64,
    /// Reverse passes (back-propagation, gradient materializations).
    pub rmad: u64,
}

impl std::ops::Add for PassCounts {
    type Output = PassCounts;
    fn add(self, rhs: PassCounts) -> PassCounts {
        PassCounts {
            forward: self.forward + rhs.forward,
            fmad: self.fmad + rhs.fmad,
            rmad: self.rmad + rhs.rmad,
        }
    }
}

/// An objective: parameters to outputs to scalar loss, plus batch sampling.
pub trait Problem: Sync {
    fn name(&self) -> &str;
    fn param_count(&self) -> usize;
    /// Output width per sample (1 for raw-scalar objectives).
    fn output_count(&self) -> usize;
    fn loss_kind(&self) -> LossKind;
    /// Draws the per-run starting point.
    fn initial_point(&self, rng: &mut Rng) -> Tensor;
    /// Draws the batch for one optimizer step.
    fn sample_batch(&self, rng: &mut Rng) -> Batch;
    /// The noise-free, whole-dataset batch used for convergence checks.
    fn full_batch(&self) -> Batch {
        Batch::Full
    }
    /// Evaluates the objective; deterministic given `(w, batch)`.
    fn evaluate(&self, w: &Tensor, batch: &Batch) -> Evaluation;
    fn convergence(&self) -> ConvergenceMetric {
        ConvergenceMetric::Absolute
    }
    /// Exact dense Hessian when the problem has one in closed form;
    /// the dense-Hessian oracle falls back to finite differences otherwise.
    fn analytic_hessian(&self, _w: &Tensor, _batch: &Batch) -> Option<Tensor> {
        None
    }
}

/// Analytic backing for problems that bypass the tape. `curvature_product`
/// multiplies by whatever curvature matrix the problem exposes to the
/// second-order methods (the true Hessian for scalar objectives, the
/// Gauss-Newton matrix for structured least squares).
pub trait AnalyticObjective {
    fn loss(&self) -> f64;
    fn gradient(&self) -> Tensor;
    fn curvature_product(&self, v: &Tensor) -> Tensor;
}

enum EvalKind {
    Taped {
        tape: Tape,
        output: NodeId,
        /// Loss gradient with respect to the outputs (`B x o`, batch-mean).
        loss_grad: Tensor,
        curvature: LossCurvature,
    },
    Analytic {
        objective: Box<dyn AnalyticObjective>,
    },
}

/// A snapshot of the objective at one `(w, batch)` point that answers
/// derivative queries and counts the passes spent answering them.
pub struct Evaluation {
    loss: f64,
    params: usize,
    kind: EvalKind,
    gradient: OnceCell<Tensor>,
    forward: Cell<u64>,
    fmad: Cell<u64>,
    rmad: Cell<u64>,
}

/// A vector pushed through the evaluation's curvature pipeline: the original
/// parameter-space vector plus its image. For taped evaluations the image is
/// the output-space directional derivative; for analytic ones it is the
/// curvature-matrix product. Projections combine linearly, which is what lets
/// the hyperparameter system reuse them instead of spending more passes.
#[derive(Debug, Clone)]
pub struct Projection {
    source: Tensor,
    image: Tensor,
}

impl Projection {
    pub fn source(&self) -> &Tensor {
        &self.source
    }

    pub fn image(&self) -> &Tensor {
        &self.image
    }

    /// Linear combination `ca * a + cb * b` of both halves.
    pub fn combine(ca: f64, a: &Projection, cb: f64, b: &Projection) -> Projection {
        let mut source = a.source.scale(ca);
        source.axpy(cb, &b.source);
        let mut image = a.image.scale(ca);
        image.axpy(cb, &b.image);
        Projection { source, image }
    }
}

impl Evaluation {
    /// Builds a taped evaluation: loss value, loss gradient, and curvature
    /// are derived here from the recorded outputs, counting one forward pass.
    pub fn from_tape(tape: Tape, output: NodeId, target: LossTarget, kind: LossKind) -> Evaluation {
        let outputs = tape.value(output);
        let params = tape.value(tape.input_id()).len();
        let (loss, loss_grad, curvature) = match (kind, &target) {
            (LossKind::SoftmaxCrossEntropy, LossTarget::Labels(labels)) => {
                // One softmax serves the value, the gradient, and the
                // curvature operator.
                let probs = loss::softmax_rows(outputs);
                let (rows, cols) = (outputs.rows(), outputs.cols());
                assert_eq!(labels.len(), rows, "one label per batch row");
                let inv_b = 1.0 / rows as f64;
                let mut total = 0.0;
                let mut grad = probs.clone();
                for (r, &label) in labels.iter().enumerate() {
                    let logit_row = outputs.row(r);
                    let m = logit_row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    let logsum =
                        m + logit_row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                    total += logsum - logit_row[label];
                    let grow = &mut grad.data_mut()[r * cols..(r + 1) * cols];
                    grow[label] -= 1.0;
                    for v in grow.iter_mut() {
                        *v *= inv_b;
                    }
                }
                (total * inv_b, grad, LossCurvature::softmax_from_predictions(probs))
            }
            (kind, target) => {
                let loss = loss::loss_value(kind, outputs, target);
                let grad = loss::loss_gradient(kind, outputs, target);
                (loss, grad, loss::loss_curvature(kind, outputs))
            }
        };
        let eval = Evaluation {
            loss,
            params,
            kind: EvalKind::Taped { tape, output, loss_grad, curvature },
            gradient: OnceCell::new(),
            forward: Cell::new(0),
            fmad: Cell::new(0),
            rmad: Cell::new(0),
        };
        eval.forward.set(1);
        eval
    }

    /// Wraps an analytic objective, counting one forward pass for the value.
    pub fn from_analytic(objective: Box<dyn AnalyticObjective>, params: usize) -> Evaluation {
        let loss = objective.loss();
        let eval = Evaluation {
            loss,
            params,
            kind: EvalKind::Analytic { objective },
            gradient: OnceCell::new(),
            forward: Cell::new(0),
            fmad: Cell::new(0),
            rmad: Cell::new(0),
        };
        eval.forward.set(1);
        eval
    }

    pub fn loss(&self) -> f64 {
        self.loss
    }

    pub fn param_count(&self) -> usize {
        self.params
    }

    /// Model outputs: the recorded batch outputs, or the loss itself viewed
    /// as a `1 x 1` output for raw-scalar objectives.
    pub fn outputs(&self) -> Tensor {
        match &self.kind {
            EvalKind::Taped { tape, output, .. } => tape.value(*output).clone(),
            EvalKind::Analytic { .. } => Tensor::matrix(1, 1, vec![self.loss]),
        }
    }

    /// Loss gradient with respect to the outputs (the chain-rule seed).
    pub fn loss_gradient(&self) -> Tensor {
        match &self.kind {
            EvalKind::Taped { loss_grad, .. } => loss_grad.clone(),
            EvalKind::Analytic { .. } => Tensor::matrix(1, 1, vec![1.0]),
        }
    }

    /// The loss curvature operator at this point's outputs.
    pub fn loss_curvature(&self) -> LossCurvature {
        match &self.kind {
            EvalKind::Taped { curvature, .. } => curvature.clone(),
            EvalKind::Analytic { .. } => LossCurvature::raw_scalar(),
        }
    }

    /// Full objective gradient, materialized once and cached. The first call
    /// costs one reverse pass.
    pub fn gradient(&self) -> &Tensor {
        self.gradient.get_or_init(|| {
            self.rmad.set(self.rmad.get() + 1);
            match &self.kind {
                EvalKind::Taped { tape, output, loss_grad, .. } => tape.vjp(*output, loss_grad),
                EvalKind::Analytic { objective } => objective.gradient(),
            }
        })
    }

    /// Back-propagates an output-space cotangent to parameter space
    /// (one reverse pass).
    pub fn vjp(&self, cotangent: &Tensor) -> Tensor {
        match &self.kind {
            EvalKind::Taped { tape, output, .. } => {
                self.rmad.set(self.rmad.get() + 1);
                tape.vjp(*output, cotangent)
            }
            EvalKind::Analytic { .. } => {
                // phi is the objective itself: the Jacobian is the gradient.
                assert_eq!(cotangent.len(), 1, "raw-scalar cotangent is 1 x 1");
                self.gradient().scale(cotangent.data()[0])
            }
        }
    }

    /// Directional derivative of the outputs along a parameter-space vector
    /// (one forward-tangent pass).
    pub fn jvp(&self, direction: &Tensor) -> Tensor {
        self.fmad.set(self.fmad.get() + 1);
        match &self.kind {
            EvalKind::Taped { tape, output, .. } => tape.jvp(*output, direction),
            EvalKind::Analytic { .. } => {
                Tensor::matrix(1, 1, vec![self.gradient().dot(direction)])
            }
        }
    }

    /// Pushes a parameter-space vector through the curvature pipeline
    /// (one forward-tangent pass). See [`Projection`].
    pub fn project(&self, v: &Tensor) -> Projection {
        self.fmad.set(self.fmad.get() + 1);
        let image = match &self.kind {
            EvalKind::Taped { tape, output, .. } => tape.jvp(*output, v),
            EvalKind::Analytic { objective } => objective.curvature_product(v),
        };
        Projection { source: v.clone(), image }
    }

    /// Completes a Newton-system residual from a projection: the curvature
    /// term plus the full gradient, i.e. `H z + J` for `proj = project(z)`
    /// (one reverse pass).
    pub fn residual_from(&self, proj: &Projection) -> Tensor {
        match &self.kind {
            EvalKind::Taped { tape, output, loss_grad, curvature } => {
                self.rmad.set(self.rmad.get() + 1);
                let mut h = curvature
                    .product(&proj.image)
                    .expect("taped losses always expose curvature");
                h.axpy(1.0, loss_grad);
                tape.vjp(*output, &h)
            }
            EvalKind::Analytic { .. } => proj.image.add(self.gradient()),
        }
    }

    /// Curvature inner product `a^T H b` from two projections, at
    /// elementwise cost (no extra passes).
    pub fn curvature_inner(&self, a: &Projection, b: &Projection) -> f64 {
        match &self.kind {
            EvalKind::Taped { curvature, .. } => {
                let hb = curvature
                    .product(&b.image)
                    .expect("taped losses always expose curvature");
                a.image.dot(&hb)
            }
            EvalKind::Analytic { .. } => a.source.dot(&b.image),
        }
    }

    /// Gradient inner product `J^T a` from a projection without
    /// materializing the gradient on taped evaluations.
    pub fn gradient_inner(&self, a: &Projection) -> f64 {
        match &self.kind {
            EvalKind::Taped { loss_grad, .. } => loss_grad.dot(&a.image),
            EvalKind::Analytic { .. } => self.gradient().dot(&a.source),
        }
    }

    /// Gauss-Newton Hessian-vector product, composed as exactly one
    /// forward-tangent and one reverse pass. Also returns the intermediate
    /// output-space vector for reuse. Raw-scalar objectives have no
    /// Gauss-Newton split and report [`AdError::UnsupportedLoss`].
    pub fn gauss_newton_hvp(&self, v: &Tensor) -> Result<(Tensor, Tensor), AdError> {
        match &self.kind {
            EvalKind::Taped { tape, output, curvature, .. } => {
                self.fmad.set(self.fmad.get() + 1);
                let jv = tape.jvp(*output, v);
                let hl_jv = curvature.product(&jv)?;
                self.rmad.set(self.rmad.get() + 1);
                Ok((tape.vjp(*output, &hl_jv), jv))
            }
            EvalKind::Analytic { .. } => {
                Err(AdError::UnsupportedLoss { kind: LossKind::RawScalar })
            }
        }
    }

    /// Multiplies by whatever curvature matrix this evaluation exposes: the
    /// Gauss-Newton matrix for taped losses, the analytic curvature
    /// otherwise.
    pub fn curvature_product(&self, v: &Tensor) -> Tensor {
        match &self.kind {
            EvalKind::Taped { .. } => {
                self.gauss_newton_hvp(v).expect("taped losses always expose curvature").0
            }
            EvalKind::Analytic { objective } => {
                self.fmad.set(self.fmad.get() + 1);
                objective.curvature_product(v)
            }
        }
    }

    /// Differentiation passes this evaluation has performed so far.
    pub fn counts(&self) -> PassCounts {
        PassCounts { forward: self.forward.get(), fmad: self.fmad.get(), rmad: self.rmad.get() }
    }

    pub fn is_taped(&self) -> bool {
        matches!(self.kind, EvalKind::Taped { .. })
    }
}

/// Back-propagates `v` through a fresh evaluation at `(w, batch)`.
/// With the loss's own gradient as `v` this is the objective gradient.
pub fn vjp(problem: &dyn Problem, w: &Tensor, batch: &Batch, v: &Tensor) -> Tensor {
    problem.evaluate(w, batch).vjp(v)
}

/// Directional derivative of the outputs along `v` at `(w, batch)`.
pub fn jvp(problem: &dyn Problem, w: &Tensor, batch: &Batch, v: &Tensor) -> Tensor {
    problem.evaluate(w, batch).jvp(v)
}

/// Gauss-Newton Hessian-vector product at `(w, batch)`; returns the product
/// and the intermediate output-space projection.
pub fn gauss_newton_hvp(
    problem: &dyn Problem,
    w: &Tensor,
    batch: &Batch,
    v: &Tensor,
) -> Result<(Tensor, Tensor), AdError> {
    problem.evaluate(w, batch).gauss_newton_hvp(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// phi(w) = w (identity) under squared loss against zero targets:
    /// J_phi = I, H_L = 2I/B, so the Gauss-Newton product doubles (B = 1).
    struct IdentityProblem {
        dim: usize,
    }

    impl Problem for IdentityProblem {
        fn name(&self) -> &str {
            "identity"
        }
        fn param_count(&self) -> usize {
            self.dim
        }
        fn output_count(&self) -> usize {
            self.dim
        }
        fn loss_kind(&self) -> LossKind {
            LossKind::SquaredDistance
        }
        fn initial_point(&self, _rng: &mut Rng) -> Tensor {
            Tensor::zeros(&[self.dim])
        }
        fn sample_batch(&self, _rng: &mut Rng) -> Batch {
            Batch::Full
        }
        fn evaluate(&self, w: &Tensor, _batch: &Batch) -> Evaluation {
            let mut tape = Tape::new();
            let wid = tape.input(w.clone());
            let out = tape.slice(wid, 0, &[1, self.dim]);
            let target = LossTarget::Values(Tensor::zeros(&[1, self.dim]));
            Evaluation::from_tape(tape, out, target, LossKind::SquaredDistance)
        }
    }

    #[test]
    fn identity_gauss_newton_doubles() {
        let p = IdentityProblem { dim: 3 };
        let w = Tensor::vector(vec![0.5, -1.0, 2.0]);
        let eval = p.evaluate(&w, &Batch::Full);
        let v = Tensor::vector(vec![1.0, 2.0, -3.0]);
        let (hv, jv) = eval.gauss_newton_hvp(&v).unwrap();
        assert_eq!(hv.data(), &[2.0, 4.0, -6.0]);
        assert_eq!(jv.data(), &[1.0, 2.0, -3.0]);
        assert_eq!(eval.counts(), PassCounts { forward: 1, fmad: 1, rmad: 1 });
    }

    #[test]
    fn identity_gradient_is_two_w() {
        let p = IdentityProblem { dim: 2 };
        let w = Tensor::vector(vec![1.0, 2.0]);
        let eval = p.evaluate(&w, &Batch::Full);
        assert_eq!(eval.loss(), 5.0);
        assert_eq!(eval.gradient().data(), &[2.0, 4.0]);
        // Cached: a second call performs no further reverse pass.
        let _ = eval.gradient();
        assert_eq!(eval.counts().rmad, 1);
    }

    #[test]
    fn projections_combine_linearly() {
        let p = IdentityProblem { dim: 2 };
        let w = Tensor::vector(vec![0.0, 0.0]);
        let eval = p.evaluate(&w, &Batch::Full);
        let a = eval.project(&Tensor::vector(vec![1.0, 0.0]));
        let b = eval.project(&Tensor::vector(vec![0.0, 1.0]));
        let c = Projection::combine(2.0, &a, -3.0, &b);
        assert_eq!(c.source().data(), &[2.0, -3.0]);
        assert_eq!(c.image().data(), &[2.0, -3.0]);
        // Curvature inner products: a^T H b with H = 2I.
        assert_eq!(eval.curvature_inner(&c, &c), 2.0 * (4.0 + 9.0));
    }

    #[test]
    fn residual_from_projection_is_hz_plus_gradient() {
        let p = IdentityProblem { dim: 2 };
        let w = Tensor::vector(vec![1.0, -1.0]);
        let eval = p.evaluate(&w, &Batch::Full);
        let z = Tensor::vector(vec![3.0, 5.0]);
        let proj = eval.project(&z);
        let r = eval.residual_from(&proj);
        // H z + J = 2z + 2w.
        assert_eq!(r.data(), &[8.0, 8.0]);
        assert_eq!(eval.counts(), PassCounts { forward: 1, fmad: 1, rmad: 1 });
    }
}
