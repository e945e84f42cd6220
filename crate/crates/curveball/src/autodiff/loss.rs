//! Loss functions applied on top of taped model outputs, with their
//! curvature available in closed form.
//!
//! Keeping the loss outside the tape is what makes the Gauss-Newton product
//! cheap: the loss Hessian acting on an output-space vector is elementwise
//! for the squared distance and a rank-one-corrected diagonal for softmax
//! cross-entropy. Both the loss value and all derivative quantities are
//! means over the batch, so hyperparameters do not depend on batch size.

use super::AdError;
use crate::numerics::Tensor;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `mean_b ||out_b - y_b||^2`.
    SquaredDistance,
    /// `mean_b (logsumexp(out_b) - out_b[label_b])`.
    SoftmaxCrossEntropy,
    /// The model output *is* the objective; no curvature split exists and
    /// such problems provide their Hessian analytically.
    RawScalar,
}

/// Ground truth paired with a batch of outputs.
#[derive(Debug, Clone)]
pub enum LossTarget {
    /// Regression targets, same shape as the outputs.
    Values(Tensor),
    /// Class indices, one per batch row.
    Labels(Vec<usize>),
    /// Raw-scalar objectives carry no target.
    None,
}

/// The loss Hessian at a batch of outputs, in a form that can multiply
/// output-space vectors at elementwise cost.
#[derive(Debug, Clone)]
pub struct LossCurvature {
    kind: LossKind,
    /// Softmax probabilities per batch row; `None` for other losses.
    predictions: Option<Tensor>,
    batch: usize,
}

impl LossCurvature {
    pub fn squared(batch: usize) -> Self {
        LossCurvature { kind: LossKind::SquaredDistance, predictions: None, batch }
    }

    /// Softmax curvature from explicit per-row probabilities (rows of a
    /// `B x c` tensor). Exposed so oracle tests can probe edge cases like a
    /// vertex of the simplex that finite logits never reach.
    pub fn softmax_from_predictions(predictions: Tensor) -> Self {
        let batch = predictions.rows();
        LossCurvature { kind: LossKind::SoftmaxCrossEntropy, predictions: Some(predictions), batch }
    }

    pub fn raw_scalar() -> Self {
        LossCurvature { kind: LossKind::RawScalar, predictions: None, batch: 1 }
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    /// Softmax predictions, when this curvature carries them.
    pub fn predictions(&self) -> Option<&Tensor> {
        self.predictions.as_ref()
    }

    /// Applies the batch-mean loss Hessian to an output-space vector `u`
    /// (shape `B x o`). Symmetric and PSD for both supported losses.
    pub fn product(&self, u: &Tensor) -> Result<Tensor, AdError> {
        match self.kind {
            LossKind::SquaredDistance => Ok(u.scale(2.0 / self.batch as f64)),
            LossKind::SoftmaxCrossEntropy => {
                let p = self.predictions.as_ref().expect("softmax curvature carries predictions");
                assert_eq!(u.shape(), p.shape(), "curvature operand must match predictions");
                let cols = p.cols();
                let inv_b = 1.0 / self.batch as f64;
                let mut out = Tensor::zeros(u.shape());
                for r in 0..p.rows() {
                    let (pr, ur) = (p.row(r), u.row(r));
                    let inner: f64 = pr.iter().zip(ur).map(|(a, b)| a * b).sum();
                    let dst = &mut out.data_mut()[r * cols..(r + 1) * cols];
                    for ((d, pi), ui) in dst.iter_mut().zip(pr).zip(ur) {
                        *d = (pi * ui - pi * inner) * inv_b;
                    }
                }
                Ok(out)
            }
            LossKind::RawScalar => Err(AdError::UnsupportedLoss { kind: self.kind }),
        }
    }
}

/// Applies the loss Hessian `H_L` to an output-space vector.
pub fn loss_hessian_product(curvature: &LossCurvature, u: &Tensor) -> Result<Tensor, AdError> {
    curvature.product(u)
}

/// Batch-mean loss value.
pub fn loss_value(kind: LossKind, outputs: &Tensor, target: &LossTarget) -> f64 {
    match (kind, target) {
        (LossKind::SquaredDistance, LossTarget::Values(y)) => {
            assert_eq!(outputs.shape(), y.shape(), "targets must match outputs");
            let batch = outputs.rows();
            outputs
                .data()
                .iter()
                .zip(y.data())
                .map(|(o, t)| (o - t) * (o - t))
                .sum::<f64>()
                / batch as f64
        }
        (LossKind::SoftmaxCrossEntropy, LossTarget::Labels(labels)) => {
            let batch = outputs.rows();
            assert_eq!(labels.len(), batch, "one label per batch row");
            let mut total = 0.0;
            for (r, &label) in labels.iter().enumerate() {
                let row = outputs.row(r);
                assert!(label < row.len(), "label {label} out of range");
                let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let logsum = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                total += logsum - row[label];
            }
            total / batch as f64
        }
        (kind, _) => panic!("loss {kind:?} incompatible with the provided target"),
    }
}

/// Batch-mean loss gradient with respect to the outputs (shape `B x o`).
pub fn loss_gradient(kind: LossKind, outputs: &Tensor, target: &LossTarget) -> Tensor {
    match (kind, target) {
        (LossKind::SquaredDistance, LossTarget::Values(y)) => {
            let batch = outputs.rows();
            outputs.sub(y).scale(2.0 / batch as f64)
        }
        (LossKind::SoftmaxCrossEntropy, LossTarget::Labels(labels)) => {
            let mut p = softmax_rows(outputs);
            let batch = outputs.rows();
            let cols = outputs.cols();
            let inv_b = 1.0 / batch as f64;
            for (r, &label) in labels.iter().enumerate() {
                let row = &mut p.data_mut()[r * cols..(r + 1) * cols];
                row[label] -= 1.0;
                for v in row.iter_mut() {
                    *v *= inv_b;
                }
            }
            p
        }
        (kind, _) => panic!("loss {kind:?} incompatible with the provided target"),
    }
}

/// Curvature operator of the loss at these outputs.
pub fn loss_curvature(kind: LossKind, outputs: &Tensor) -> LossCurvature {
    match kind {
        LossKind::SquaredDistance => LossCurvature::squared(outputs.rows()),
        LossKind::SoftmaxCrossEntropy => {
            LossCurvature::softmax_from_predictions(softmax_rows(outputs))
        }
        LossKind::RawScalar => LossCurvature::raw_scalar(),
    }
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let (rows, cols) = (logits.rows(), logits.cols());
    let mut out = Tensor::zeros(&[rows, cols]);
    for r in 0..rows {
        let row = logits.row(r);
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let dst = &mut out.data_mut()[r * cols..(r + 1) * cols];
        let mut z = 0.0;
        for (d, v) in dst.iter_mut().zip(row) {
            *d = (v - m).exp();
            z += *d;
        }
        for d in dst.iter_mut() {
            *d /= z;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn squared_curvature_doubles() {
        let curv = LossCurvature::squared(1);
        let u = Tensor::matrix(1, 2, vec![1.0, -2.0]);
        assert_eq!(curv.product(&u).unwrap().data(), &[2.0, -4.0]);
    }

    #[test]
    fn softmax_curvature_at_simplex_vertex_vanishes() {
        let curv = LossCurvature::softmax_from_predictions(Tensor::matrix(1, 2, vec![1.0, 0.0]));
        let u = Tensor::matrix(1, 2, vec![3.0, -7.0]);
        assert_eq!(curv.product(&u).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn softmax_curvature_uniform_case() {
        let curv = LossCurvature::softmax_from_predictions(Tensor::matrix(1, 2, vec![0.5, 0.5]));
        let u = Tensor::matrix(1, 2, vec![1.0, -1.0]);
        assert_eq!(curv.product(&u).unwrap().data(), &[0.5, -0.5]);
    }

    #[test]
    fn raw_scalar_has_no_curvature_product() {
        let curv = LossCurvature::raw_scalar();
        let u = Tensor::matrix(1, 1, vec![1.0]);
        assert_eq!(
            curv.product(&u),
            Err(AdError::UnsupportedLoss { kind: LossKind::RawScalar })
        );
    }

    #[test]
    fn squared_loss_value_and_gradient() {
        let out = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let y = Tensor::matrix(2, 2, vec![0.0, 2.0, 3.0, 2.0]);
        let target = LossTarget::Values(y);
        // ((1)^2 + 0 + 0 + (2)^2) / 2 = 2.5
        assert_eq!(loss_value(LossKind::SquaredDistance, &out, &target), 2.5);
        let g = loss_gradient(LossKind::SquaredDistance, &out, &target);
        assert_eq!(g.data(), &[1.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let out = Tensor::matrix(1, 4, vec![0.0; 4]);
        let target = LossTarget::Labels(vec![2]);
        let v = loss_value(LossKind::SoftmaxCrossEntropy, &out, &target);
        assert!((v - 4.0f64.ln()).abs() < 1e-12);
        let g = loss_gradient(LossKind::SoftmaxCrossEntropy, &out, &target);
        assert!((g.at(0, 2) - (0.25 - 1.0)).abs() < 1e-12);
        assert!((g.at(0, 0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = Rng::new(5);
        let out = Tensor::matrix(3, 4, (0..12).map(|_| rng.normal()).collect());
        let target = LossTarget::Labels(vec![0, 3, 1]);
        let g = loss_gradient(LossKind::SoftmaxCrossEntropy, &out, &target);
        let h = 1e-6;
        for i in 0..12 {
            let mut p = out.clone();
            p.data_mut()[i] += h;
            let mut m = out.clone();
            m.data_mut()[i] -= h;
            let fd = (loss_value(LossKind::SoftmaxCrossEntropy, &p, &target)
                - loss_value(LossKind::SoftmaxCrossEntropy, &m, &target))
                / (2.0 * h);
            assert!((fd - g.data()[i]).abs() < 1e-6, "coord {i}: {fd} vs {}", g.data()[i]);
        }
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let out = Tensor::matrix(1, 3, vec![1000.0, 999.0, -1000.0]);
        let p = softmax_rows(&out);
        assert!(p.all_finite());
        assert!((p.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let target = LossTarget::Labels(vec![0]);
        assert!(loss_value(LossKind::SoftmaxCrossEntropy, &out, &target).is_finite());
    }

    #[test]
    fn curvature_product_is_symmetric_and_psd() {
        let mut rng = Rng::new(9);
        let logits = Tensor::matrix(4, 5, (0..20).map(|_| rng.normal()).collect());
        let curv = loss_curvature(LossKind::SoftmaxCrossEntropy, &logits);
        for _ in 0..20 {
            let u = Tensor::matrix(4, 5, (0..20).map(|_| rng.normal()).collect());
            let v = Tensor::matrix(4, 5, (0..20).map(|_| rng.normal()).collect());
            let hu = curv.product(&u).unwrap();
            let hv = curv.product(&v).unwrap();
            let lhs = v.dot(&hu);
            let rhs = u.dot(&hv);
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
            assert!(u.dot(&hu) >= -1e-10);
        }
    }

    #[test]
    fn batch_mean_scaling() {
        // Same rows stacked twice: gradient per row halves relative to B=1.
        let one = Tensor::matrix(1, 2, vec![0.3, -0.7]);
        let two = Tensor::matrix(2, 2, vec![0.3, -0.7, 0.3, -0.7]);
        let g1 = loss_gradient(LossKind::SoftmaxCrossEntropy, &one, &LossTarget::Labels(vec![1]));
        let g2 =
            loss_gradient(LossKind::SoftmaxCrossEntropy, &two, &LossTarget::Labels(vec![1, 1]));
        assert!((g2.at(0, 0) - g1.at(0, 0) / 2.0).abs() < 1e-15);
    }
}
