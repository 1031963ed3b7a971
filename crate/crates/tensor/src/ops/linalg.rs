use crate::error::{Result, TensorError};
use crate::tape::{expect_rank, Op, Tape, Var};
use crate::tensor::Tensor;

/// `c = alpha * op(a) * op(b) + beta * c` for row-major buffers, where
/// `op(a)` is `m x k` and `op(b)` is `k x n`. A transposed operand is
/// stored in its untransposed layout (`k x m` for `a`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above pin every buffer to the extents dgemm walks.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Tape {
    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        expect_rank("matmul", ta, 2)?;
        expect_rank("matmul", tb, 2)?;
        let (m, k) = (ta.shape()[0], ta.shape()[1]);
        let (k2, n) = (tb.shape()[0], tb.shape()[1]);
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, 0.0, &mut out);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul { a, b }))
    }

    /// Transpose of a matrix.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        expect_rank("transpose", t, 2)?;
        let (r, c) = (t.shape()[0], t.shape()[1]);
        let out = transpose_buf(t.data(), r, c);
        Ok(self.push(Tensor::from_parts(vec![c, r], out), Op::Transpose { a }))
    }
}

pub(crate) fn transpose_buf(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = data[i * cols + j];
        }
    }
    out
}

pub(crate) fn matmul_backward(tape: &Tape, a: Var, b: Var, g: &[f64], out: &mut Vec<(Var, Vec<f64>)>) {
    let (ta, tb) = (tape.value(a), tape.value(b));
    let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
    if tape.needs(a) {
        // dA = G . B^T
        let mut da = vec![0.0; m * k];
        gemm(m, n, k, g, false, tb.data(), true, 0.0, &mut da);
        out.push((a, da));
    }
    if tape.needs(b) {
        // dB = A^T . G
        let mut db = vec![0.0; k * n];
        gemm(k, m, n, ta.data(), true, g, false, 0.0, &mut db);
        out.push((b, db));
    }
}

pub(crate) fn transpose_backward(tape: &Tape, a: Var, g: &[f64], out: &mut Vec<(Var, Vec<f64>)>) {
    if tape.needs(a) {
        let s = tape.value(a).shape();
        // g is [c, r]; bring it back to [r, c].
        out.push((a, transpose_buf(g, s[1], s[0])));
    }
}
