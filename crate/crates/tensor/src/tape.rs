//! Dynamic reverse-mode tape.
//!
//! Every forward op appends one node holding its output value and enough
//! saved state to run its backward rule. Nodes only ever reference earlier
//! nodes, so walking the tape back to front visits each op exactly once in
//! a valid reverse topological order.

use crate::error::{Result, TensorError};
use crate::ops::conv::ConvGeom;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    Transpose { a: Var },
    Reshape { a: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Affine { a: Var, scale: f64 },
    ScaleBy { a: Var, s: Var },
    AddRow { x: Var, b: Var },
    ScaleRows { x: Var, v: Var },
    ScaleCols { x: Var, v: Var },
    Relu { a: Var },
    Sigmoid { a: Var },
    Tanh { a: Var },
    Softmax { a: Var, outer: usize, len: usize, inner: usize },
    Sum { a: Var },
    Mean { a: Var },
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
    Embedding { table: Var, ids: Vec<usize> },
    Conv2d { x: Var, w: Var, geom: ConvGeom, cols: Vec<f64> },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64>, train: bool },
    Select { x: Var, index: usize },
    Stack { parts: Vec<Var> },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            MatMul { a, b } | Add { a, b } | Sub { a, b } | Mul { a, b } => vec![*a, *b],
            Transpose { a } | Reshape { a } | Affine { a, .. } | Relu { a } | Sigmoid { a }
            | Tanh { a } | Softmax { a, .. } | Sum { a } | Mean { a } => vec![*a],
            ScaleBy { a, s } => vec![*a, *s],
            AddRow { x, b } => vec![*x, *b],
            ScaleRows { x, v } | ScaleCols { x, v } => vec![*x, *v],
            CrossEntropy { logits, .. } => vec![*logits],
            Embedding { table, .. } => vec![*table],
            Conv2d { x, w, .. } => vec![*x, *w],
            BatchNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Select { x, .. } => vec![*x],
            Stack { parts } => parts.clone(),
        }
    }
}

pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) grad: Option<Vec<f64>>,
    pub(crate) requires_grad: bool,
    pub(crate) op: Op,
}

/// An append-only record of forward operations, rebuilt for every pass.
const PATTERN_SEED: u64 = 0xcbf2_9ce4_8422_2325;

pub struct Tape {
    pub(crate) nodes: Vec<Node>,
    pub(crate) pattern: u64,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), pattern: PATTERN_SEED }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Fingerprint of the on/off pattern of every rectifier evaluated so
    /// far. Two passes with equal fingerprints took the same linear piece.
    pub fn activation_pattern(&self) -> u64 {
        self.pattern
    }

    /// Records an input tensor.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass, shaped like the node's value.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let node = &self.nodes[v.0];
        node.grad
            .as_ref()
            .map(|g| Tensor::from_parts(node.value.shape().to_vec(), g.clone()))
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op) -> Var {
        let inputs = op.inputs();
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Propagates d(loss)/d(node) to every node that requires a gradient.
    ///
    /// Gradients accumulate when a tensor feeds several ops. Intermediate
    /// gradients are released once consumed; leaf gradients are kept.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.nodes[loss.0].value.shape().to_vec();
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(TensorError::NonScalarLoss(shape));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) || !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            if let Op::Select { x, index } = self.nodes[i].op {
                // Write straight into the slice instead of materializing a
                // zero-padded copy of the whole input per selected example.
                if self.nodes[x.0].requires_grad {
                    let n = self.nodes[x.0].value.numel();
                    let slot = self.nodes[x.0].grad.get_or_insert_with(|| vec![0.0; n]);
                    let inner = g.len();
                    slot[index * inner..(index + 1) * inner].iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                continue;
            }
            let contributions = self.input_grads(i, &g);
            for (v, contribution) in contributions {
                self.accumulate(v, contribution);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, contribution: Vec<f64>) {
        let node = &mut self.nodes[v.0];
        debug_assert_eq!(contribution.len(), node.value.numel());
        match &mut node.grad {
            Some(g) => g.iter_mut().zip(&contribution).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(contribution),
        }
    }

    pub(crate) fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn input_grads(&self, i: usize, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
        use crate::ops::{conv, elementwise, linalg, norm, reduce, structural};
        let node = &self.nodes[i];
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => linalg::matmul_backward(self, *a, *b, g, &mut out),
            Op::Transpose { a } => linalg::transpose_backward(self, *a, g, &mut out),
            Op::Reshape { a } => {
                if self.needs(*a) {
                    out.push((*a, g.to_vec()));
                }
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if self.needs(v) {
                        out.push((v, g.to_vec()));
                    }
                }
            }
            Op::Sub { a, b } => {
                if self.needs(*a) {
                    out.push((*a, g.to_vec()));
                }
                if self.needs(*b) {
                    out.push((*b, g.iter().map(|x| -x).collect()));
                }
            }
            Op::Mul { a, b } => elementwise::mul_backward(self, *a, *b, g, &mut out),
            Op::Affine { a, scale } => {
                if self.needs(*a) {
                    out.push((*a, g.iter().map(|x| x * scale).collect()));
                }
            }
            Op::ScaleBy { a, s } => elementwise::scale_by_backward(self, *a, *s, g, &mut out),
            Op::AddRow { x, b } => elementwise::add_row_backward(self, *x, *b, g, &mut out),
            Op::ScaleRows { x, v } => elementwise::scale_rows_backward(self, *x, *v, g, &mut out),
            Op::ScaleCols { x, v } => elementwise::scale_cols_backward(self, *x, *v, g, &mut out),
            Op::Relu { a } => elementwise::relu_backward(self, *a, g, &mut out),
            Op::Sigmoid { a } => elementwise::sigmoid_backward(self, *a, &node.value, g, &mut out),
            Op::Tanh { a } => elementwise::tanh_backward(self, *a, &node.value, g, &mut out),
            Op::Softmax { a, outer, len, inner } => {
                reduce::softmax_backward(self, *a, &node.value, (*outer, *len, *inner), g, &mut out)
            }
            Op::Sum { a } => reduce::sum_backward(self, *a, g, 1.0, &mut out),
            Op::Mean { a } => {
                let n = self.nodes[a.0].value.numel() as f64;
                reduce::sum_backward(self, *a, g, 1.0 / n, &mut out)
            }
            Op::CrossEntropy { logits, labels, probs } => {
                reduce::cross_entropy_backward(self, *logits, labels, probs, g, &mut out)
            }
            Op::Embedding { table, ids } => structural::embedding_backward(self, *table, ids, g, &mut out),
            Op::Conv2d { x, w, geom, cols } => conv::conv2d_backward(self, *x, *w, geom, cols, g, &mut out),
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, train } => norm::batchnorm_backward(
                self,
                norm::BnSaved { x: *x, gamma: *gamma, beta: *beta, xhat, inv_std, train: *train },
                g,
                &mut out,
            ),
            Op::Select { x, index } => structural::select_backward(self, *x, *index, g, &mut out),
            Op::Stack { parts } => structural::stack_backward(self, parts, g, &mut out),
        }
        out
    }
}

pub(crate) fn expect_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<()> {
    if t.rank() != rank {
        return Err(TensorError::Rank {
            op,
            expected: rank,
            shape: t.shape().to_vec(),
        });
    }
    Ok(())
}

pub(crate) fn expect_same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}
