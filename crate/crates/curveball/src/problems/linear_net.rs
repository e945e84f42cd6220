//! Two-layer linear network fitting an ill-conditioned linear map: find
//! `W2 W1` close to a target `A` whose singular values span several orders of
//! magnitude, measured as the mean squared error over a fixed Gaussian input
//! sample.
//!
//! Because the model is linear in each layer, the whole dataset enters the
//! loss only through the input second moment `C = X^T X / n`:
//!
//! `f(W1, W2) = mean_s ||(W2 W1 - A) x_s||^2 = tr(M C M^T)`, `M = W2 W1 - A`.
//!
//! Every evaluation therefore costs a handful of small matrix products
//! independent of `n`. The gradient and the Gauss-Newton curvature product
//! follow the same route:
//!
//! * gradient blocks: `dW1 = 2 W2^T M C`, `dW2 = 2 M C W1^T`;
//! * curvature along `(V1, V2)`: with `N = V2 W1 + W2 V1`, the blocks are
//!   `2 W2^T N C` and `2 N C W1^T`.
//!
//! These are identical, value for value, to recording the per-sample network
//! on a tape with the squared loss; the test suite pins that equivalence.

use std::sync::Arc;

use super::ProblemError;
use crate::autodiff::{
    AnalyticObjective, Batch, ConvergenceMetric, Evaluation, LossKind, Problem,
};
use crate::numerics::{condition_estimate, matmul, matmul_nt, matmul_tn, Rng, Tensor};

#[derive(Debug, Clone)]
pub struct LinearNet {
    /// Target map, `d_out x d_in`.
    target: Tensor,
    /// Input sample, `n x d_in` (kept for minibatch evaluation and tests).
    inputs: Tensor,
    /// Input second moment `X^T X / n`, `d_in x d_in`.
    second_moment: Arc<Tensor>,
    d_in: usize,
    hidden: usize,
    d_out: usize,
    kappa: f64,
}

/// Builds the problem: `A = U diag(sigma) V^T` with orthonormal random
/// factors and log-spaced singular values spanning `[1/sqrt(kappa),
/// sqrt(kappa)]`, plus a standard normal input sample. The realized condition
/// number is verified against `kappa` by power iteration.
pub fn make_rahimi_recht(
    d_in: usize,
    hidden: usize,
    d_out: usize,
    n: usize,
    kappa: f64,
    rng: &mut Rng,
) -> Result<LinearNet, ProblemError> {
    if d_in < 1 || hidden < 1 || d_out < 1 || n < 1 {
        return Err(ProblemError::InvalidDim(
            "all dimensions must be at least 1".into(),
        ));
    }
    if !(kappa >= 1.0) {
        return Err(ProblemError::InvalidDim(format!(
            "condition number {kappa} must be at least 1"
        )));
    }
    let k = d_in.min(d_out);
    if k < 2 && kappa != 1.0 {
        return Err(ProblemError::InvalidDim(
            "a rank-1 target cannot carry a condition number above 1".into(),
        ));
    }

    let sigmas: Vec<f64> = (0..k)
        .map(|i| {
            if k == 1 {
                1.0
            } else {
                // kappa^(i/(k-1) - 1/2), log-spaced across the band.
                kappa.powf(i as f64 / (k - 1) as f64 - 0.5)
            }
        })
        .collect();

    let u = random_orthonormal_columns(d_out, k, rng);
    let v = random_orthonormal_columns(d_in, k, rng);
    let mut target = Tensor::zeros(&[d_out, d_in]);
    for (idx, sigma) in sigmas.iter().enumerate() {
        for r in 0..d_out {
            for c in 0..d_in {
                let val = target.at(r, c) + sigma * u.at(r, idx) * v.at(c, idx);
                target.set(r, c, val);
            }
        }
    }

    let realized = condition_estimate(&target, 300);
    assert!(
        (realized - kappa).abs() <= 0.01 * kappa,
        "realized condition number {realized} strays from requested {kappa}"
    );

    let inputs = Tensor::matrix(n, d_in, (0..n * d_in).map(|_| rng.normal()).collect());
    let second_moment = Arc::new(matmul_tn(&inputs, &inputs).scale(1.0 / n as f64));

    Ok(LinearNet { target, inputs, second_moment, d_in, hidden, d_out, kappa })
}

/// Gram-Schmidt on standard normal columns; full rank with probability 1.
fn random_orthonormal_columns(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    assert!(cols <= rows, "cannot orthonormalize more columns than rows");
    let mut q = Tensor::zeros(&[rows, cols]);
    for j in 0..cols {
        let mut col: Vec<f64> = (0..rows).map(|_| rng.normal()).collect();
        for prev in 0..j {
            let dot: f64 = (0..rows).map(|r| col[r] * q.at(r, prev)).sum();
            for (r, c) in col.iter_mut().enumerate() {
                *c -= dot * q.at(r, prev);
            }
        }
        let norm: f64 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm > 1e-10, "degenerate random column");
        for (r, c) in col.iter().enumerate() {
            q.set(r, j, c / norm);
        }
    }
    q
}

impl LinearNet {
    pub fn target(&self) -> &Tensor {
        &self.target
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.d_in, self.hidden, self.d_out)
    }

    fn split(&self, w: &Tensor) -> (Tensor, Tensor) {
        assert_eq!(w.len(), self.param_count(), "parameter length mismatch");
        let w1_len = self.hidden * self.d_in;
        let w1 = Tensor::from_vec(&[self.hidden, self.d_in], w.data()[..w1_len].to_vec());
        let w2 = Tensor::from_vec(&[self.d_out, self.hidden], w.data()[w1_len..].to_vec());
        (w1, w2)
    }

    /// Packs layer matrices into the flat parameter order `[W1, W2]`.
    pub fn pack(&self, w1: &Tensor, w2: &Tensor) -> Tensor {
        assert_eq!(w1.shape(), &[self.hidden, self.d_in]);
        assert_eq!(w2.shape(), &[self.d_out, self.hidden]);
        let mut data = w1.data().to_vec();
        data.extend_from_slice(w2.data());
        Tensor::vector(data)
    }

    fn moment_for(&self, batch: &Batch) -> Arc<Tensor> {
        match batch {
            Batch::Full => Arc::clone(&self.second_moment),
            Batch::Indices(rows) => {
                assert!(!rows.is_empty(), "empty minibatch");
                let mut sub = Tensor::zeros(&[rows.len(), self.d_in]);
                for (i, &r) in rows.iter().enumerate() {
                    sub.data_mut()[i * self.d_in..(i + 1) * self.d_in]
                        .copy_from_slice(self.inputs.row(r));
                }
                Arc::new(matmul_tn(&sub, &sub).scale(1.0 / rows.len() as f64))
            }
            Batch::Noise(_) => panic!("this problem draws samples, not noise factors"),
        }
    }
}

struct LinearNetEval {
    w1: Tensor,
    w2: Tensor,
    /// `M C` with `M = W2 W1 - A`.
    mc: Tensor,
    residual: Tensor,
    moment: Arc<Tensor>,
}

impl AnalyticObjective for LinearNetEval {
    fn loss(&self) -> f64 {
        self.residual.dot(&self.mc)
    }
    fn gradient(&self) -> Tensor {
        let g1 = matmul_tn(&self.w2, &self.mc).scale(2.0);
        let g2 = matmul_nt(&self.mc, &self.w1).scale(2.0);
        let mut data = g1.data().to_vec();
        data.extend_from_slice(g2.data());
        Tensor::vector(data)
    }
    fn curvature_product(&self, v: &Tensor) -> Tensor {
        let w1_len = self.w1.len();
        let v1 = Tensor::from_vec(self.w1.shape(), v.data()[..w1_len].to_vec());
        let v2 = Tensor::from_vec(self.w2.shape(), v.data()[w1_len..].to_vec());
        let mut n = matmul(&v2, &self.w1);
        n.axpy(1.0, &matmul(&self.w2, &v1));
        let nc = matmul(&n, &self.moment);
        let u1 = matmul_tn(&self.w2, &nc).scale(2.0);
        let u2 = matmul_nt(&nc, &self.w1).scale(2.0);
        let mut data = u1.data().to_vec();
        data.extend_from_slice(u2.data());
        Tensor::vector(data)
    }
}

impl Problem for LinearNet {
    fn name(&self) -> &str {
        "rahimi_recht"
    }
    fn param_count(&self) -> usize {
        self.hidden * self.d_in + self.d_out * self.hidden
    }
    fn output_count(&self) -> usize {
        self.d_out
    }
    fn loss_kind(&self) -> LossKind {
        LossKind::SquaredDistance
    }
    fn initial_point(&self, rng: &mut Rng) -> Tensor {
        let s1 = (1.0 / self.d_in as f64).sqrt();
        let s2 = (1.0 / self.hidden as f64).sqrt();
        let mut data = Vec::with_capacity(self.param_count());
        for _ in 0..self.hidden * self.d_in {
            data.push(rng.normal() * s1);
        }
        for _ in 0..self.d_out * self.hidden {
            data.push(rng.normal() * s2);
        }
        Tensor::vector(data)
    }
    fn sample_batch(&self, _rng: &mut Rng) -> Batch {
        Batch::Full
    }
    fn evaluate(&self, w: &Tensor, batch: &Batch) -> Evaluation {
        let (w1, w2) = self.split(w);
        let moment = self.moment_for(batch);
        let mut residual = matmul(&w2, &w1);
        residual.axpy(-1.0, &self.target);
        let mc = matmul(&residual, &moment);
        let params = self.param_count();
        Evaluation::from_analytic(
            Box::new(LinearNetEval { w1, w2, mc, residual, moment }),
            params,
        )
    }
    fn convergence(&self) -> ConvergenceMetric {
        ConvergenceMetric::RelativeToStart
    }
    fn analytic_hessian(&self, w: &Tensor, batch: &Batch) -> Option<Tensor> {
        // Gauss-Newton matrix assembled from curvature products against the
        // standard basis; exact for this problem's second-order baselines.
        let p = self.param_count();
        let eval = self.evaluate(w, batch);
        let mut h = Tensor::zeros(&[p, p]);
        let mut e = Tensor::zeros(&[p]);
        for j in 0..p {
            e.data_mut()[j] = 1.0;
            let col = eval.curvature_product(&e);
            for i in 0..p {
                h.set(i, j, col.data()[i]);
            }
            e.data_mut()[j] = 0.0;
        }
        Some(h)
    }
}
