use crate::error::{Result, TensorError};
use crate::tape::{expect_rank, Op, Tape, Var};
use crate::tensor::Tensor;

type Grads = Vec<(Var, Vec<f64>)>;

impl Tape {
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if shape.contains(&0) || shape.iter().product::<usize>() != t.numel() {
            return Err(TensorError::ShapeMismatch { op: "reshape", lhs: t.shape().to_vec(), rhs: shape.to_vec() });
        }
        let out = Tensor::from_parts(shape.to_vec(), t.data().to_vec());
        Ok(self.push(out, Op::Reshape { a }))
    }

    /// Rows of `table` (`[V, E]`) gathered by `ids`, giving `[ids.len(), E]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        expect_rank("embedding", t, 2)?;
        let (v, e) = (t.shape()[0], t.shape()[1]);
        if ids.is_empty() {
            return Err(TensorError::Invalid("embedding: empty id list".into()));
        }
        let mut data = Vec::with_capacity(ids.len() * e);
        for &id in ids {
            if id >= v {
                return Err(TensorError::IndexOutOfRange { op: "embedding", index: id, extent: v });
            }
            data.extend_from_slice(&t.data()[id * e..(id + 1) * e]);
        }
        let out = Tensor::from_parts(vec![ids.len(), e], data);
        Ok(self.push(out, Op::Embedding { table, ids: ids.to_vec() }))
    }

    /// Slice `index` of the leading axis, dropping that axis.
    pub fn select(&mut self, x: Var, index: usize) -> Result<Var> {
        let t = self.value(x);
        if t.rank() == 0 {
            return Err(TensorError::Rank { op: "select", expected: 1, shape: vec![] });
        }
        let extent = t.shape()[0];
        if index >= extent {
            return Err(TensorError::IndexOutOfRange { op: "select", index, extent });
        }
        let inner = t.numel() / extent;
        let mut shape = t.shape()[1..].to_vec();
        if shape.is_empty() {
            shape.push(1);
        }
        let out = Tensor::from_parts(shape, t.data()[index * inner..(index + 1) * inner].to_vec());
        Ok(self.push(out, Op::Select { x, index }))
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| TensorError::Invalid("stack: no inputs".into()))?;
        let shape = self.value(*first).shape().to_vec();
        let mut data = Vec::with_capacity(shape.iter().product::<usize>() * parts.len());
        for &p in parts {
            let t = self.value(p);
            if t.shape() != shape.as_slice() {
                return Err(TensorError::ShapeMismatch { op: "stack", lhs: shape, rhs: t.shape().to_vec() });
            }
            data.extend_from_slice(t.data());
        }
        let mut out_shape = vec![parts.len()];
        out_shape.extend_from_slice(&shape);
        let out = Tensor::from_parts(out_shape, data);
        Ok(self.push(out, Op::Stack { parts: parts.to_vec() }))
    }
}

pub(crate) fn embedding_backward(tape: &Tape, table: Var, ids: &[usize], g: &[f64], out: &mut Grads) {
    if !tape.needs(table) {
        return;
    }
    let t = tape.value(table);
    let e = t.shape()[1];
    let mut d = vec![0.0; t.numel()];
    for (row, &id) in ids.iter().enumerate() {
        for k in 0..e {
            d[id * e + k] += g[row * e + k];
        }
    }
    out.push((table, d));
}

pub(crate) fn select_backward(tape: &Tape, x: Var, index: usize, g: &[f64], out: &mut Grads) {
    if !tape.needs(x) {
        return;
    }
    let t = tape.value(x);
    let inner = t.numel() / t.shape()[0];
    let mut d = vec![0.0; t.numel()];
    d[index * inner..(index + 1) * inner].copy_from_slice(g);
    out.push((x, d));
}

pub(crate) fn stack_backward(tape: &Tape, parts: &[Var], g: &[f64], out: &mut Grads) {
    let inner = g.len() / parts.len();
    for (i, &p) in parts.iter().enumerate() {
        if tape.needs(p) {
            out.push((p, g[i * inner..(i + 1) * inner].to_vec()));
        }
    }
}
