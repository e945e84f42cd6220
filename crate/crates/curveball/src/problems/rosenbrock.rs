//! The stochastic valley objective:
//! `R(u, v) = (1 - u)^2 + 100 eps (v - u^2)^2`,
//! where `eps` is drawn once per evaluation from a uniform interval and
//! shared by the value, gradient, and Hessian of that evaluation. With
//! `eps = 1` this is the classic banana-shaped benchmark with its minimum
//! at `(1, 1)`.
//!
//! As a scalar objective it has no output/loss split, so second-order
//! methods receive the true 2x2 Hessian instead of a Gauss-Newton form.

use super::NoiseSpec;
use crate::autodiff::{AnalyticObjective, Batch, Evaluation, LossKind, Problem};
use crate::numerics::{Rng, Tensor};

/// Scalar objective value at `(u, v)` under noise factor `eps`.
pub fn rosenbrock(point: (f64, f64), eps: f64) -> f64 {
    let (u, v) = point;
    let a = 1.0 - u;
    let b = v - u * u;
    a * a + 100.0 * eps * b * b
}

fn gradient(point: (f64, f64), eps: f64) -> [f64; 2] {
    let (u, v) = point;
    let b = v - u * u;
    [-2.0 * (1.0 - u) - 400.0 * eps * u * b, 200.0 * eps * b]
}

fn hessian(point: (f64, f64), eps: f64) -> [f64; 4] {
    let (u, v) = point;
    let b = v - u * u;
    [
        2.0 - 400.0 * eps * b + 800.0 * eps * u * u,
        -400.0 * eps * u,
        -400.0 * eps * u,
        200.0 * eps,
    ]
}

/// The benchmark problem: fixed start point, per-evaluation noise draw.
#[derive(Debug, Clone)]
pub struct Rosenbrock {
    noise: NoiseSpec,
    start: (f64, f64),
}

impl Rosenbrock {
    pub fn new(noise: NoiseSpec) -> Self {
        Rosenbrock { noise, start: (-0.5, 1.5) }
    }

    pub fn with_start(noise: NoiseSpec, start: (f64, f64)) -> Self {
        Rosenbrock { noise, start }
    }

    pub fn noise(&self) -> NoiseSpec {
        self.noise
    }

    fn eps_of(batch: &Batch) -> f64 {
        match batch {
            Batch::Noise(eps) => *eps,
            Batch::Full => 1.0,
            Batch::Indices(_) => panic!("this objective has no sample indices"),
        }
    }
}

struct RosenbrockEval {
    point: (f64, f64),
    eps: f64,
}

impl AnalyticObjective for RosenbrockEval {
    fn loss(&self) -> f64 {
        rosenbrock(self.point, self.eps)
    }
    fn gradient(&self) -> Tensor {
        Tensor::vector(gradient(self.point, self.eps).to_vec())
    }
    fn curvature_product(&self, v: &Tensor) -> Tensor {
        let h = hessian(self.point, self.eps);
        let d = v.data();
        Tensor::vector(vec![h[0] * d[0] + h[1] * d[1], h[2] * d[0] + h[3] * d[1]])
    }
}

impl Problem for Rosenbrock {
    fn name(&self) -> &str {
        "rosenbrock"
    }
    fn param_count(&self) -> usize {
        2
    }
    fn output_count(&self) -> usize {
        1
    }
    fn loss_kind(&self) -> LossKind {
        LossKind::RawScalar
    }
    fn initial_point(&self, _rng: &mut Rng) -> Tensor {
        Tensor::vector(vec![self.start.0, self.start.1])
    }
    fn sample_batch(&self, rng: &mut Rng) -> Batch {
        Batch::Noise(rng.uniform(self.noise.lo, self.noise.hi).expect("noise interval validated"))
    }
    fn full_batch(&self) -> Batch {
        Batch::Noise(1.0)
    }
    fn evaluate(&self, w: &Tensor, batch: &Batch) -> Evaluation {
        assert_eq!(w.len(), 2, "this objective has two parameters");
        let point = (w.data()[0], w.data()[1]);
        let eps = Self::eps_of(batch);
        Evaluation::from_analytic(Box::new(RosenbrockEval { point, eps }), 2)
    }
    fn analytic_hessian(&self, w: &Tensor, batch: &Batch) -> Option<Tensor> {
        let point = (w.data()[0], w.data()[1]);
        Some(Tensor::matrix(2, 2, hessian(point, Self::eps_of(batch)).to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::full_hessian;

    #[test]
    fn value_examples() {
        assert_eq!(rosenbrock((1.0, 1.0), 1.0), 0.0);
        assert_eq!(rosenbrock((1.0, 1.0), 2.7), 0.0);
        assert_eq!(rosenbrock((0.0, 0.0), 1.0), 1.0);
        assert_eq!(rosenbrock((0.0, 1.0), 2.0), 201.0);
    }

    #[test]
    fn deterministic_noise_recovers_classic_function() {
        let spec = NoiseSpec::DETERMINISTIC;
        let problem = Rosenbrock::new(spec);
        let mut rng = Rng::new(1);
        for _ in 0..20 {
            let batch = problem.sample_batch(&mut rng);
            assert_eq!(batch, Batch::Noise(1.0));
        }
        let w = Tensor::vector(vec![-0.3, 0.8]);
        let eval = problem.evaluate(&w, &Batch::Noise(1.0));
        assert_eq!(eval.loss(), rosenbrock((-0.3, 0.8), 1.0));
    }

    #[test]
    fn gradient_at_origin() {
        let problem = Rosenbrock::new(NoiseSpec::DETERMINISTIC);
        let w = Tensor::vector(vec![0.0, 0.0]);
        let eval = problem.evaluate(&w, &Batch::Noise(1.0));
        assert_eq!(eval.gradient().data(), &[-2.0, 0.0]);
        // And through the vjp interface with the unit cotangent.
        let g = eval.vjp(&Tensor::matrix(1, 1, vec![1.0]));
        assert_eq!(g.data(), &[-2.0, 0.0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let problem = Rosenbrock::new(NoiseSpec::DETERMINISTIC);
        let mut rng = Rng::new(4);
        for _ in 0..10 {
            let u = rng.uniform(-2.0, 2.0).unwrap();
            let v = rng.uniform(-1.0, 3.0).unwrap();
            let eps = rng.uniform(0.3, 3.0).unwrap();
            let eval = problem.evaluate(&Tensor::vector(vec![u, v]), &Batch::Noise(eps));
            let g = eval.gradient();
            let h = 1e-6;
            let fd = [
                (rosenbrock((u + h, v), eps) - rosenbrock((u - h, v), eps)) / (2.0 * h),
                (rosenbrock((u, v + h), eps) - rosenbrock((u, v - h), eps)) / (2.0 * h),
            ];
            for (a, b) in g.data().iter().zip(fd) {
                assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn hessian_at_optimum() {
        let problem = Rosenbrock::new(NoiseSpec::DETERMINISTIC);
        let w = Tensor::vector(vec![1.0, 1.0]);
        let h = full_hessian(&problem, &w, &Batch::Noise(1.0)).unwrap();
        assert_eq!(h.data(), &[802.0, -400.0, -400.0, 200.0]);
    }

    #[test]
    fn curvature_product_applies_true_hessian() {
        let problem = Rosenbrock::new(NoiseSpec::DETERMINISTIC);
        let w = Tensor::vector(vec![1.0, 1.0]);
        let eval = problem.evaluate(&w, &Batch::Noise(1.0));
        let hv = eval.curvature_product(&Tensor::vector(vec![1.0, 0.0]));
        assert_eq!(hv.data(), &[802.0, -400.0]);
    }

    #[test]
    fn noise_draws_stay_in_interval() {
        let spec = NoiseSpec::new(0.0, 3.0).unwrap();
        let problem = Rosenbrock::new(spec);
        let mut rng = Rng::new(8);
        for _ in 0..1000 {
            match problem.sample_batch(&mut rng) {
                Batch::Noise(e) => assert!((0.0..3.0).contains(&e)),
                other => panic!("unexpected batch {other:?}"),
            }
        }
    }
}
