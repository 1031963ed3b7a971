use crate::error::{Result, TensorError};
use crate::tape::{expect_rank, Op, Tape, Var};
use crate::tensor::Tensor;

type Grads = Vec<(Var, Vec<f64>)>;

/// Softmax over `len` strided entries of a `[outer, len, inner]` view.
pub(crate) fn softmax_buf(x: &[f64], outer: usize, len: usize, inner: usize) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let max = (0..len).map(|k| x[base + k * inner]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in 0..len {
                let e = (x[base + k * inner] - max).exp();
                y[base + k * inner] = e;
                total += e;
            }
            for k in 0..len {
                y[base + k * inner] /= total;
            }
        }
    }
    y
}

impl Tape {
    /// Softmax along `axis`, computed with max subtraction.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = self.value(a);
        let rank = t.rank();
        if axis >= rank {
            return Err(TensorError::AxisOutOfRange { op: "softmax", axis, rank });
        }
        let s = t.shape();
        let outer = s[..axis].iter().product();
        let len = s[axis];
        let inner = s[axis + 1..].iter().product();
        let y = softmax_buf(t.data(), outer, len, inner);
        let out = Tensor::from_parts(s.to_vec(), y);
        Ok(self.push(out, Op::Softmax { a, outer, len, inner }))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum { a })
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push(Tensor::scalar(m), Op::Mean { a })
    }

    /// Mean softmax cross-entropy of `[batch, classes]` logits against class labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        expect_rank("softmax_cross_entropy", t, 2)?;
        let (b, k) = (t.shape()[0], t.shape()[1]);
        if labels.len() != b {
            return Err(TensorError::ShapeMismatch {
                op: "softmax_cross_entropy",
                lhs: t.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(TensorError::IndexOutOfRange { op: "softmax_cross_entropy", index: bad, extent: k });
        }
        let probs = softmax_buf(t.data(), b, k, 1);
        let loss = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let row = &t.data()[i * k..(i + 1) * k];
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                lse - row[l]
            })
            .sum::<f64>()
            / b as f64;
        let op = Op::CrossEntropy { logits, labels: labels.to_vec(), probs };
        Ok(self.push(Tensor::scalar(loss), op))
    }
}

pub(crate) fn softmax_backward(
    tape: &Tape,
    a: Var,
    y: &Tensor,
    (outer, len, inner): (usize, usize, usize),
    g: &[f64],
    out: &mut Grads,
) {
    if !tape.needs(a) {
        return;
    }
    let y = y.data();
    let mut dx = vec![0.0; y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let dot: f64 = (0..len).map(|k| g[base + k * inner] * y[base + k * inner]).sum();
            for k in 0..len {
                let idx = base + k * inner;
                dx[idx] = y[idx] * (g[idx] - dot);
            }
        }
    }
    out.push((a, dx));
}

pub(crate) fn sum_backward(tape: &Tape, a: Var, g: &[f64], factor: f64, out: &mut Grads) {
    if tape.needs(a) {
        out.push((a, vec![g[0] * factor; tape.value(a).numel()]));
    }
}

pub(crate) fn cross_entropy_backward(
    tape: &Tape,
    logits: Var,
    labels: &[usize],
    probs: &[f64],
    g: &[f64],
    out: &mut Grads,
) {
    if !tape.needs(logits) {
        return;
    }
    let b = labels.len();
    let k = probs.len() / b;
    let scale = g[0] / b as f64;
    let mut d: Vec<f64> = probs.iter().map(|p| p * scale).collect();
    for (i, &l) in labels.iter().enumerate() {
        d[i * k + l] -= scale;
    }
    out.push((logits, d));
}
