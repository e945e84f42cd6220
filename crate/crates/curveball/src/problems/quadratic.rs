//! Positive definite quadratics `f(w) = 0.5 w^T H w + b^T w`, with the exact
//! minimizer available from a dense solve. Scalar objectives like these carry
//! their true Hessian analytically, making them the exactness fixtures for
//! the second-order optimizers.

use std::sync::Arc;

use crate::autodiff::{AnalyticObjective, Batch, Evaluation, LossKind, Problem};
use crate::numerics::{mat_vec, solve_symmetric, Rng, Tensor};

#[derive(Debug, Clone)]
pub struct Quadratic {
    h: Arc<Tensor>,
    b: Arc<Tensor>,
    dim: usize,
}

impl Quadratic {
    /// Quadratic with explicit SPD matrix `h` and linear term `b`.
    pub fn new(h: Tensor, b: Tensor) -> Self {
        let dim = b.len();
        assert_eq!(h.shape(), &[dim, dim], "matrix must match the linear term");
        Quadratic { h: Arc::new(h), b: Arc::new(b), dim }
    }

    /// One-dimensional `f(w) = 0.5 h w^2`.
    pub fn scalar(h: f64) -> Self {
        Quadratic::new(Tensor::matrix(1, 1, vec![h]), Tensor::vector(vec![0.0]))
    }

    /// Random SPD quadratic: `H = G^T G + 0.5 I` with standard normal `G`,
    /// random normal `b`.
    pub fn random_spd(dim: usize, rng: &mut Rng) -> Self {
        let g = Tensor::matrix(dim, dim, (0..dim * dim).map(|_| rng.normal()).collect());
        let mut h = crate::numerics::matmul_tn(&g, &g);
        for i in 0..dim {
            let v = h.at(i, i) + 0.5;
            h.set(i, i, v);
        }
        let b = Tensor::vector((0..dim).map(|_| rng.normal()).collect());
        Quadratic::new(h, b)
    }

    pub fn matrix(&self) -> &Tensor {
        &self.h
    }

    /// Exact minimizer from a dense solve: `H w* = -b`.
    pub fn minimizer(&self) -> Tensor {
        solve_symmetric(&self.h, &self.b.scale(-1.0)).expect("quadratic matrix is SPD")
    }

    /// Objective value at the exact minimizer.
    pub fn min_value(&self) -> f64 {
        let w = self.minimizer();
        0.5 * w.dot(&mat_vec(&self.h, &w)) + self.b.dot(&w)
    }
}

struct QuadraticEval {
    h: Arc<Tensor>,
    b: Arc<Tensor>,
    w: Tensor,
    hw: Tensor,
}

impl AnalyticObjective for QuadraticEval {
    fn loss(&self) -> f64 {
        0.5 * self.w.dot(&self.hw) + self.b.dot(&self.w)
    }
    fn gradient(&self) -> Tensor {
        self.hw.add(&self.b)
    }
    fn curvature_product(&self, v: &Tensor) -> Tensor {
        mat_vec(&self.h, v)
    }
}

impl Problem for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }
    fn param_count(&self) -> usize {
        self.dim
    }
    fn output_count(&self) -> usize {
        1
    }
    fn loss_kind(&self) -> LossKind {
        LossKind::RawScalar
    }
    fn initial_point(&self, rng: &mut Rng) -> Tensor {
        Tensor::vector((0..self.dim).map(|_| rng.normal()).collect())
    }
    fn sample_batch(&self, _rng: &mut Rng) -> Batch {
        Batch::Full
    }
    fn evaluate(&self, w: &Tensor, _batch: &Batch) -> Evaluation {
        assert_eq!(w.len(), self.dim, "parameter length mismatch");
        let hw = mat_vec(&self.h, w);
        Evaluation::from_analytic(
            Box::new(QuadraticEval {
                h: Arc::clone(&self.h),
                b: Arc::clone(&self.b),
                w: w.clone(),
                hw,
            }),
            self.dim,
        )
    }
    fn analytic_hessian(&self, _w: &Tensor, _batch: &Batch) -> Option<Tensor> {
        Some((*self.h).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_quadratic_basics() {
        let q = Quadratic::scalar(4.0);
        let w = Tensor::vector(vec![3.0]);
        let eval = q.evaluate(&w, &Batch::Full);
        assert_eq!(eval.loss(), 18.0);
        assert_eq!(eval.gradient().data(), &[12.0]);
        assert_eq!(eval.curvature_product(&Tensor::vector(vec![2.0])).data(), &[8.0]);
    }

    #[test]
    fn minimizer_is_stationary() {
        let mut rng = Rng::new(12);
        let q = Quadratic::random_spd(6, &mut rng);
        let w = q.minimizer();
        let eval = q.evaluate(&w, &Batch::Full);
        assert!(eval.gradient().norm() < 1e-10 * w.norm().max(1.0));
        // Nearby points are strictly worse.
        let fstar = q.min_value();
        let mut probe = w.clone();
        probe.data_mut()[0] += 0.1;
        assert!(q.evaluate(&probe, &Batch::Full).loss() > fstar);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Rng::new(21);
        let q = Quadratic::random_spd(5, &mut rng);
        let w = q.initial_point(&mut rng);
        let g = q.evaluate(&w, &Batch::Full).gradient().clone();
        let h = 1e-6;
        for i in 0..5 {
            let mut wp = w.clone();
            wp.data_mut()[i] += h;
            let mut wm = w.clone();
            wm.data_mut()[i] -= h;
            let fd = (q.evaluate(&wp, &Batch::Full).loss()
                - q.evaluate(&wm, &Batch::Full).loss())
                / (2.0 * h);
            assert!((fd - g.data()[i]).abs() <= 1e-5 * fd.abs().max(1.0));
        }
    }
}
