//! Fully connected classifier trained with softmax cross-entropy. Every
//! evaluation records the forward pass on a tape, so gradients and curvature
//! products come from the reverse/forward sweeps rather than hand-derived
//! formulas.

use serde::{Deserialize, Serialize};

use super::{Dataset, ProblemError};
use crate::autodiff::{Batch, Evaluation, LossKind, LossTarget, Problem, Tape};
use crate::numerics::{Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Debug, Clone)]
pub struct Mlp {
    dataset: Dataset,
    /// Layer widths including the input: `[d, h1, ..., classes]`.
    widths: Vec<usize>,
    activation: Activation,
    batch_size: usize,
}

/// Builds the classifier; `layer_sizes` are the output widths of each layer
/// (the input width comes from the dataset) and the last entry must equal the
/// number of classes.
pub fn make_mlp(
    layer_sizes: &[usize],
    activation: Activation,
    dataset: Dataset,
    _rng: &mut Rng,
) -> Result<Mlp, ProblemError> {
    if layer_sizes.is_empty() {
        return Err(ProblemError::InvalidDim("need at least one layer".into()));
    }
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(ProblemError::InvalidDim("zero-width layer".into()));
    }
    if dataset.is_empty() {
        return Err(ProblemError::InvalidDim("empty dataset".into()));
    }
    let last = *layer_sizes.last().unwrap();
    if last != dataset.classes() {
        return Err(ProblemError::InvalidDim(format!(
            "final layer width {last} must match {} classes",
            dataset.classes()
        )));
    }
    let mut widths = Vec::with_capacity(layer_sizes.len() + 1);
    widths.push(dataset.dim());
    widths.extend_from_slice(layer_sizes);
    Ok(Mlp { dataset, widths, activation, batch_size: 128 })
}

impl Mlp {
    pub fn with_batch_size(mut self, batch_size: usize) -> Mlp {
        assert!(batch_size >= 1, "batch size must be at least 1");
        self.batch_size = batch_size;
        self
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }
}

impl Problem for Mlp {
    fn name(&self) -> &str {
        "mlp"
    }

    fn param_count(&self) -> usize {
        // Per layer: out x in weights plus out biases.
        self.widths
            .windows(2)
            .map(|w| w[1] * w[0] + w[1])
            .sum()
    }

    fn output_count(&self) -> usize {
        *self.widths.last().unwrap()
    }

    fn loss_kind(&self) -> LossKind {
        LossKind::SoftmaxCrossEntropy
    }

    /// Weights `N(0, 1/fan_in)`, biases 0, drawn layer by layer in row-major
    /// order so the stream is reproducible.
    fn initial_point(&self, rng: &mut Rng) -> Tensor {
        let mut data = Vec::with_capacity(self.param_count());
        for w in self.widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (1.0 / fan_in as f64).sqrt();
            for _ in 0..fan_out * fan_in {
                data.push(scale * rng.normal());
            }
            for _ in 0..fan_out {
                data.push(0.0);
            }
        }
        Tensor::vector(data)
    }

    fn sample_batch(&self, rng: &mut Rng) -> Batch {
        let n = self.dataset.len();
        Batch::Indices((0..self.batch_size).map(|_| rng.index(n)).collect())
    }

    fn evaluate(&self, w: &Tensor, batch: &Batch) -> Evaluation {
        assert_eq!(w.len(), self.param_count(), "parameter length mismatch");
        let (features, labels) = match batch {
            Batch::Full => (self.dataset.features().clone(), self.dataset.labels().to_vec()),
            Batch::Indices(rows) => {
                assert!(!rows.is_empty(), "empty minibatch");
                self.dataset.gather(rows)
            }
            Batch::Noise(_) => panic!("this problem draws samples, not noise factors"),
        };

        let mut tape = Tape::new();
        let wid = tape.input(w.clone());
        let mut h = tape.constant(features);
        let mut offset = 0;
        for (layer, dims) in self.widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (dims[0], dims[1]);
            let weight = tape.slice(wid, offset, &[fan_out, fan_in]);
            offset += fan_out * fan_in;
            let bias = tape.slice(wid, offset, &[fan_out]);
            offset += fan_out;
            h = tape.affine(h, weight, Some(bias));
            if layer + 1 < self.layer_count() {
                h = match self.activation {
                    Activation::Tanh => tape.tanh(h),
                    Activation::Relu => tape.relu(h),
                };
            }
        }
        Evaluation::from_tape(tape, h, LossTarget::Labels(labels), LossKind::SoftmaxCrossEntropy)
    }
}
