//! Record-then-sweep automatic differentiation over tensor primitives.
//!
//! Recording is eager: every primitive computes its value immediately and
//! appends one node to the tape, so the node list is topologically ordered by
//! construction. Both differentiation sweeps walk the same records:
//!
//! * the reverse sweep ([`Tape::vjp`]) seeds a cotangent at one node and
//!   accumulates adjoints back to the single input;
//! * the forward sweep ([`Tape::jvp`]) seeds a tangent at the input and
//!   replays every primitive in tangent arithmetic.
//!
//! Using one tape for both directions guarantees the two sweeps see identical
//! intermediate values, which is what makes the adjoint identity
//! `u . (J v) == (J^T u) . v` hold to roundoff rather than to truncation.

use crate::numerics::{matmul, matmul_nt, matmul_tn, Tensor};

pub type NodeId = usize;

/// Primitive operations the tape understands. `x`, `a`, `b`, `w` are node
/// ids of operands recorded earlier.
#[derive(Debug, Clone)]
enum Op {
    /// The differentiation root: the flat parameter vector.
    Input,
    /// Non-differentiated data (features, targets).
    Constant,
    /// Contiguous window of a rank-1 source, reinterpreted with a new shape.
    Slice { src: NodeId, offset: usize },
    /// `x w^T + bias` with `x: B x k`, `w: m x k`, bias broadcast over rows.
    Affine { x: NodeId, w: NodeId, bias: Option<NodeId> },
    Tanh { x: NodeId },
    Relu { x: NodeId },
    Square { x: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Sum { x: NodeId },
    Mean { x: NodeId },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// A recorded computation with exactly one differentiation input.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    input: Option<NodeId>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    /// Registers the differentiation input. Exactly one per tape.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        assert!(self.input.is_none(), "tape already has an input");
        let id = self.push(Op::Input, value);
        self.input = Some(id);
        id
    }

    /// Registers data the sweeps treat as constant.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Constant, value)
    }

    /// Window `[offset, offset + len)` of a rank-1 node, viewed with `shape`.
    pub fn slice(&mut self, src: NodeId, offset: usize, shape: &[usize]) -> NodeId {
        let source = &self.nodes[src].value;
        assert_eq!(source.shape().len(), 1, "slice source must be rank 1");
        let len: usize = shape.iter().product();
        assert!(offset + len <= source.len(), "slice out of bounds");
        let value = Tensor::from_vec(shape, source.data()[offset..offset + len].to_vec());
        self.push(Op::Slice { src, offset }, value)
    }

    /// `x w^T (+ bias)`: the affine layer with `x: B x k`, `w: m x k`,
    /// `bias: m`, producing `B x m`.
    pub fn affine(&mut self, x: NodeId, w: NodeId, bias: Option<NodeId>) -> NodeId {
        let mut value = matmul_nt(&self.nodes[x].value, &self.nodes[w].value);
        if let Some(b) = bias {
            add_bias(&mut value, &self.nodes[b].value);
        }
        self.push(Op::Affine { x, w, bias }, value)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x].value.clone().map(f64::tanh);
        self.push(Op::Tanh { x }, value)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x].value.clone().map(|v| v.max(0.0));
        self.push(Op::Relu { x }, value)
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x].value.clone().map(|v| v * v);
        self.push(Op::Square { x }, value)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.nodes[a].value.sub(&self.nodes[b].value);
        self.push(Op::Sub { a, b }, value)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.nodes[a].value.mul(&self.nodes[b].value);
        self.push(Op::Mul { a, b }, value)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let value = Tensor::scalar(self.nodes[x].value.sum());
        self.push(Op::Sum { x }, value)
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let n = self.nodes[x].value.len();
        let value = Tensor::scalar(self.nodes[x].value.sum() / n as f64);
        self.push(Op::Mean { x }, value)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn input_id(&self) -> NodeId {
        self.input.expect("tape has no input")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Recomputes every node from its operands. Returns true when the replay
    /// reproduces the recorded values bit-exactly; the recording discipline
    /// guarantees it, and the test suite holds the tape to it.
    pub fn replay_matches(&self) -> bool {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let recomputed = match &node.op {
                Op::Input | Op::Constant => node.value.clone(),
                Op::Slice { src, offset } => {
                    let len = node.value.len();
                    Tensor::from_vec(
                        node.value.shape(),
                        values[*src].data()[*offset..*offset + len].to_vec(),
                    )
                }
                Op::Affine { x, w, bias } => {
                    let mut v = matmul_nt(&values[*x], &values[*w]);
                    if let Some(b) = bias {
                        add_bias(&mut v, &values[*b]);
                    }
                    v
                }
                Op::Tanh { x } => values[*x].clone().map(f64::tanh),
                Op::Relu { x } => values[*x].clone().map(|v| v.max(0.0)),
                Op::Square { x } => values[*x].clone().map(|v| v * v),
                Op::Sub { a, b } => values[*a].sub(&values[*b]),
                Op::Mul { a, b } => values[*a].mul(&values[*b]),
                Op::Sum { x } => Tensor::scalar(values[*x].sum()),
                Op::Mean { x } => Tensor::scalar(values[*x].sum() / values[*x].len() as f64),
            };
            values.push(recomputed);
        }
        self.nodes
            .iter()
            .zip(&values)
            .all(|(n, v)| bits_equal(&n.value, v))
    }

    /// Reverse sweep: seeds `cotangent` at `output` and accumulates adjoints
    /// down to the input node. Returns the parameter-space adjoint.
    pub fn vjp(&self, output: NodeId, cotangent: &Tensor) -> Tensor {
        assert_eq!(
            cotangent.shape(),
            self.nodes[output].value.shape(),
            "cotangent shape must match the seeded node"
        );
        let input = self.input_id();
        let mut adjoint: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        adjoint[output] = Some(cotangent.clone());

        for id in (0..=output).rev() {
            let Some(grad) = adjoint[id].take() else { continue };
            if id == input {
                // The input may also feed later nodes; keep accumulating.
                adjoint[id] = Some(grad);
                continue;
            }
            match &self.nodes[id].op {
                Op::Input | Op::Constant => {}
                Op::Slice { src, offset } => {
                    let slot = adjoint[*src]
                        .get_or_insert_with(|| Tensor::zeros(self.nodes[*src].value.shape()));
                    let dst = &mut slot.data_mut()[*offset..*offset + grad.len()];
                    for (d, g) in dst.iter_mut().zip(grad.data()) {
                        *d += g;
                    }
                }
                Op::Affine { x, w, bias } => {
                    accumulate(&mut adjoint, *x, matmul(&grad, &self.nodes[*w].value));
                    accumulate(&mut adjoint, *w, matmul_tn(&grad, &self.nodes[*x].value));
                    if let Some(b) = bias {
                        accumulate(&mut adjoint, *b, column_sums(&grad));
                    }
                }
                Op::Tanh { x } => {
                    // d tanh = 1 - tanh^2, read from the recorded output.
                    let y = &self.nodes[id].value;
                    let mut g = grad;
                    for (gi, yi) in g.data_mut().iter_mut().zip(y.data()) {
                        *gi *= 1.0 - yi * yi;
                    }
                    accumulate(&mut adjoint, *x, g);
                }
                Op::Relu { x } => {
                    let src = &self.nodes[*x].value;
                    let mut g = grad;
                    for (gi, xi) in g.data_mut().iter_mut().zip(src.data()) {
                        if *xi <= 0.0 {
                            *gi = 0.0;
                        }
                    }
                    accumulate(&mut adjoint, *x, g);
                }
                Op::Square { x } => {
                    let src = &self.nodes[*x].value;
                    let mut g = grad;
                    for (gi, xi) in g.data_mut().iter_mut().zip(src.data()) {
                        *gi *= 2.0 * xi;
                    }
                    accumulate(&mut adjoint, *x, g);
                }
                Op::Sub { a, b } => {
                    accumulate(&mut adjoint, *b, grad.scale(-1.0));
                    accumulate(&mut adjoint, *a, grad);
                }
                Op::Mul { a, b } => {
                    accumulate(&mut adjoint, *a, grad.mul(&self.nodes[*b].value));
                    accumulate(&mut adjoint, *b, grad.mul(&self.nodes[*a].value));
                }
                Op::Sum { x } => {
                    let shape = self.nodes[*x].value.shape();
                    let g = grad.item();
                    accumulate(&mut adjoint, *x, filled(shape, g));
                }
                Op::Mean { x } => {
                    let shape = self.nodes[*x].value.shape();
                    let n: usize = self.nodes[*x].value.len();
                    let g = grad.item() / n as f64;
                    accumulate(&mut adjoint, *x, filled(shape, g));
                }
            }
        }
        adjoint[input]
            .take()
            .unwrap_or_else(|| Tensor::zeros(self.nodes[input].value.shape()))
    }

    /// Forward sweep: seeds `tangent` at the input and replays every
    /// primitive in tangent arithmetic. Returns the tangent at `output`.
    /// Absent tangents (constants and anything downstream of only constants)
    /// are treated as zero without materializing them.
    pub fn jvp(&self, output: NodeId, tangent: &Tensor) -> Tensor {
        let input = self.input_id();
        assert_eq!(
            tangent.shape(),
            self.nodes[input].value.shape(),
            "tangent shape must match the input"
        );
        let mut tangents: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        tangents[input] = Some(tangent.clone());

        for id in 0..=output {
            if matches!(self.nodes[id].op, Op::Input | Op::Constant) {
                continue;
            }
            let t = match &self.nodes[id].op {
                Op::Input | Op::Constant => unreachable!(),
                Op::Slice { src, offset } => tangents[*src].as_ref().map(|ts| {
                    let len = self.nodes[id].value.len();
                    Tensor::from_vec(
                        self.nodes[id].value.shape(),
                        ts.data()[*offset..*offset + len].to_vec(),
                    )
                }),
                Op::Affine { x, w, bias } => {
                    let mut acc: Option<Tensor> = tangents[*x]
                        .as_ref()
                        .map(|tx| matmul_nt(tx, &self.nodes[*w].value));
                    if let Some(tw) = tangents[*w].as_ref() {
                        let term = matmul_nt(&self.nodes[*x].value, tw);
                        acc = Some(match acc {
                            Some(a) => a.add(&term),
                            None => term,
                        });
                    }
                    if let Some(b) = bias {
                        if let Some(tb) = tangents[*b].as_ref() {
                            let mut base =
                                acc.unwrap_or_else(|| Tensor::zeros(self.nodes[id].value.shape()));
                            add_bias(&mut base, tb);
                            acc = Some(base);
                        }
                    }
                    acc
                }
                Op::Tanh { x } => tangents[*x].as_ref().map(|tx| {
                    let y = &self.nodes[id].value;
                    let mut t = tx.clone();
                    for (ti, yi) in t.data_mut().iter_mut().zip(y.data()) {
                        *ti *= 1.0 - yi * yi;
                    }
                    t
                }),
                Op::Relu { x } => tangents[*x].as_ref().map(|tx| {
                    let src = &self.nodes[*x].value;
                    let mut t = tx.clone();
                    for (ti, xi) in t.data_mut().iter_mut().zip(src.data()) {
                        if *xi <= 0.0 {
                            *ti = 0.0;
                        }
                    }
                    t
                }),
                Op::Square { x } => tangents[*x].as_ref().map(|tx| {
                    let src = &self.nodes[*x].value;
                    let mut t = tx.clone();
                    for (ti, xi) in t.data_mut().iter_mut().zip(src.data()) {
                        *ti *= 2.0 * xi;
                    }
                    t
                }),
                Op::Sub { a, b } => match (tangents[*a].as_ref(), tangents[*b].as_ref()) {
                    (Some(ta), Some(tb)) => Some(ta.sub(tb)),
                    (Some(ta), None) => Some(ta.clone()),
                    (None, Some(tb)) => Some(tb.scale(-1.0)),
                    (None, None) => None,
                },
                Op::Mul { a, b } => {
                    let left = tangents[*a].as_ref().map(|ta| ta.mul(&self.nodes[*b].value));
                    let right = tangents[*b].as_ref().map(|tb| tb.mul(&self.nodes[*a].value));
                    match (left, right) {
                        (Some(l), Some(r)) => Some(l.add(&r)),
                        (Some(l), None) => Some(l),
                        (None, Some(r)) => Some(r),
                        (None, None) => None,
                    }
                }
                Op::Sum { x } => tangents[*x].as_ref().map(|tx| Tensor::scalar(tx.sum())),
                Op::Mean { x } => tangents[*x]
                    .as_ref()
                    .map(|tx| Tensor::scalar(tx.sum() / tx.len() as f64)),
            };
            tangents[id] = t;
        }
        tangents[output]
            .take()
            .unwrap_or_else(|| Tensor::zeros(self.nodes[output].value.shape()))
    }
}

fn accumulate(adjoint: &mut [Option<Tensor>], id: NodeId, grad: Tensor) {
    match &mut adjoint[id] {
        Some(existing) => existing.axpy(1.0, &grad),
        slot => *slot = Some(grad),
    }
}

fn add_bias(value: &mut Tensor, bias: &Tensor) {
    let cols = value.cols();
    assert_eq!(bias.len(), cols, "bias length must match output width");
    for row in value.data_mut().chunks_mut(cols) {
        for (v, b) in row.iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
}

fn column_sums(m: &Tensor) -> Tensor {
    let cols = m.cols();
    let mut out = vec![0.0; cols];
    for row in m.data().chunks(cols) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    Tensor::vector(out)
}

fn filled(shape: &[usize], value: f64) -> Tensor {
    let len = shape.iter().product();
    Tensor::from_vec(shape, vec![value; len])
}

fn bits_equal(a: &Tensor, b: &Tensor) -> bool {
    a.shape() == b.shape()
        && a.data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| x.to_bits() == y.to_bits())
}
