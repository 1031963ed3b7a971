use crate::error::{Result, TensorError};
use crate::tape::{expect_rank, expect_same_shape, Op, Tape, Var};
use crate::tensor::Tensor;

type Grads = Vec<(Var, Vec<f64>)>;

impl Tape {
    fn zip_with(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        expect_same_shape(op, ta, tb)?;
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(Tensor::from_parts(ta.shape().to_vec(), data))
    }

    fn map_unary(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        self.value(a).map(f)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with("add", a, b, |x, y| x + y)?;
        Ok(self.push(t, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with("sub", a, b, |x, y| x - y)?;
        Ok(self.push(t, Op::Sub { a, b }))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with("mul", a, b, |x, y| x * y)?;
        Ok(self.push(t, Op::Mul { a, b }))
    }

    /// `scale * a + shift` with constant coefficients.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let t = self.map_unary(a, |x| scale * x + shift);
        self.push(t, Op::Affine { a, scale })
    }

    pub fn scale(&mut self, a: Var, scale: f64) -> Var {
        let t = self.map_unary(a, |x| scale * x);
        self.push(t, Op::Affine { a, scale })
    }

    /// Multiplies every element of `a` by the one-element tensor `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        let ts = self.value(s);
        if ts.numel() != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "scale_by",
                lhs: self.value(a).shape().to_vec(),
                rhs: ts.shape().to_vec(),
            });
        }
        let k = ts.item();
        let t = self.map_unary(a, |x| k * x);
        Ok(self.push(t, Op::ScaleBy { a, s }))
    }

    /// Adds the vector `b` (`[n]`) to every row of `x` (`[m, n]`).
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        expect_rank("add_row", tx, 2)?;
        let n = tx.shape()[1];
        if tb.shape() != [n] {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                lhs: tx.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let bd = tb.data();
        let data = tx.data().chunks(n).flat_map(|row| row.iter().zip(bd).map(|(a, c)| a + c)).collect();
        let t = Tensor::from_parts(tx.shape().to_vec(), data);
        Ok(self.push(t, Op::AddRow { x, b }))
    }

    /// `out[i][j] = x[i][j] * v[i]` for `x: [m, n]`, `v: [m]`.
    pub fn scale_rows(&mut self, x: Var, v: Var) -> Result<Var> {
        let (tx, tv) = (self.value(x), self.value(v));
        expect_rank("scale_rows", tx, 2)?;
        let (m, n) = (tx.shape()[0], tx.shape()[1]);
        if tv.shape() != [m] {
            return Err(TensorError::ShapeMismatch {
                op: "scale_rows",
                lhs: tx.shape().to_vec(),
                rhs: tv.shape().to_vec(),
            });
        }
        let vd = tv.data();
        let data = tx.data().chunks(n).zip(vd).flat_map(|(row, &s)| row.iter().map(move |a| a * s)).collect();
        let t = Tensor::from_parts(vec![m, n], data);
        Ok(self.push(t, Op::ScaleRows { x, v }))
    }

    /// `out[i][j] = x[i][j] * v[j]` for `x: [m, n]`, `v: [n]`.
    pub fn scale_cols(&mut self, x: Var, v: Var) -> Result<Var> {
        let (tx, tv) = (self.value(x), self.value(v));
        expect_rank("scale_cols", tx, 2)?;
        let (m, n) = (tx.shape()[0], tx.shape()[1]);
        if tv.shape() != [n] {
            return Err(TensorError::ShapeMismatch {
                op: "scale_cols",
                lhs: tx.shape().to_vec(),
                rhs: tv.shape().to_vec(),
            });
        }
        let vd = tv.data();
        let data = tx.data().chunks(n).flat_map(|row| row.iter().zip(vd).map(|(a, s)| a * s)).collect();
        let t = Tensor::from_parts(vec![m, n], data);
        Ok(self.push(t, Op::ScaleCols { x, v }))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut h = self.pattern;
        for &x in self.value(a).data() {
            h = (h ^ u64::from(x > 0.0)).wrapping_mul(0x0100_0000_01b3);
        }
        self.pattern = h;
        let t = self.map_unary(a, |x| if x > 0.0 { x } else { 0.0 });
        self.push(t, Op::Relu { a })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.map_unary(a, sigmoid);
        self.push(t, Op::Sigmoid { a })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.map_unary(a, f64::tanh);
        self.push(t, Op::Tanh { a })
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn mul_backward(tape: &Tape, a: Var, b: Var, g: &[f64], out: &mut Grads) {
    let (ta, tb) = (tape.value(a), tape.value(b));
    if tape.needs(a) {
        out.push((a, g.iter().zip(tb.data()).map(|(g, y)| g * y).collect()));
    }
    if tape.needs(b) {
        out.push((b, g.iter().zip(ta.data()).map(|(g, x)| g * x).collect()));
    }
}

pub(crate) fn scale_by_backward(tape: &Tape, a: Var, s: Var, g: &[f64], out: &mut Grads) {
    let k = tape.value(s).item();
    if tape.needs(a) {
        out.push((a, g.iter().map(|x| x * k).collect()));
    }
    if tape.needs(s) {
        let ds: f64 = g.iter().zip(tape.value(a).data()).map(|(g, x)| g * x).sum();
        out.push((s, vec![ds]));
    }
}

pub(crate) fn add_row_backward(tape: &Tape, x: Var, b: Var, g: &[f64], out: &mut Grads) {
    if tape.needs(x) {
        out.push((x, g.to_vec()));
    }
    if tape.needs(b) {
        let n = tape.value(b).numel();
        let mut db = vec![0.0; n];
        for row in g.chunks(n) {
            db.iter_mut().zip(row).for_each(|(d, r)| *d += r);
        }
        out.push((b, db));
    }
}

pub(crate) fn scale_rows_backward(tape: &Tape, x: Var, v: Var, g: &[f64], out: &mut Grads) {
    let (tx, tv) = (tape.value(x), tape.value(v));
    let n = tx.shape()[1];
    if tape.needs(x) {
        let dx = g.chunks(n).zip(tv.data()).flat_map(|(row, &s)| row.iter().map(move |a| a * s)).collect();
        out.push((x, dx));
    }
    if tape.needs(v) {
        let dv = g
            .chunks(n)
            .zip(tx.data().chunks(n))
            .map(|(gr, xr)| gr.iter().zip(xr).map(|(a, b)| a * b).sum())
            .collect();
        out.push((v, dv));
    }
}

pub(crate) fn scale_cols_backward(tape: &Tape, x: Var, v: Var, g: &[f64], out: &mut Grads) {
    let (tx, tv) = (tape.value(x), tape.value(v));
    let n = tx.shape()[1];
    if tape.needs(x) {
        let dx = g.chunks(n).flat_map(|row| row.iter().zip(tv.data()).map(|(a, s)| a * s)).collect();
        out.push((x, dx));
    }
    if tape.needs(v) {
        let mut dv = vec![0.0; n];
        for (gr, xr) in g.chunks(n).zip(tx.data().chunks(n)) {
            for j in 0..n {
                dv[j] += gr[j] * xr[j];
            }
        }
        out.push((v, dv));
    }
}

pub(crate) fn relu_backward(tape: &Tape, a: Var, g: &[f64], out: &mut Grads) {
    if tape.needs(a) {
        let da = g
            .iter()
            .zip(tape.value(a).data())
            .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
            .collect();
        out.push((a, da));
    }
}

pub(crate) fn sigmoid_backward(tape: &Tape, a: Var, y: &Tensor, g: &[f64], out: &mut Grads) {
    if tape.needs(a) {
        out.push((a, g.iter().zip(y.data()).map(|(g, y)| g * y * (1.0 - y)).collect()));
    }
}

pub(crate) fn tanh_backward(tape: &Tape, a: Var, y: &Tensor, g: &[f64], out: &mut Grads) {
    if tape.needs(a) {
        out.push((a, g.iter().zip(y.data()).map(|(g, y)| g * (1.0 - y * y)).collect()));
    }
}
