use crate::error::{Result, TensorError};
use crate::ops::linalg::gemm;
use crate::tape::{Op, Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
    /// Input carried no batch axis (`[C, H, W]`).
    pub unbatched: bool,
}

impl ConvGeom {
    fn k(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.ho * self.wo
    }
}

/// Output extent `floor((input + 2 pad - kernel) / stride) + 1` of a strided,
/// padded window; `None` when the kernel does not fit or the stride is zero.
pub fn conv_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let span = (input + 2 * pad).checked_sub(kernel)?;
    (stride > 0).then(|| span / stride + 1)
}

/// Output columns `ox` whose input column `ox·stride + kj − pad` is in range.
fn valid_span(g: &ConvGeom, kj: usize) -> (usize, usize) {
    let lo = if g.pad > kj { (g.pad - kj).div_ceil(g.stride) } else { 0 };
    let hi = if g.w + g.pad > kj { ((g.w + g.pad - kj - 1) / g.stride + 1).min(g.wo) } else { 0 };
    (lo, hi.max(lo))
}

fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let p = g.positions();
    let bp = g.batch * p;
    let mut cols = vec![0.0; g.k() * bp];
    for b in 0..g.batch {
        for c in 0..g.c_in {
            let plane = &x[(b * g.c_in + c) * g.h * g.w..][..g.h * g.w];
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    let row = (c * g.kh + ki) * g.kw + kj;
                    let dst = &mut cols[row * bp + b * p..][..p];
                    let (lo, hi) = valid_span(g, kj);
                    for oy in 0..g.ho {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize || lo == hi {
                            continue;
                        }
                        let src = &plane[iy as usize * g.w..][..g.w];
                        let out = &mut dst[oy * g.wo + lo..oy * g.wo + hi];
                        let first = lo * g.stride + kj - g.pad;
                        if g.stride == 1 {
                            out.copy_from_slice(&src[first..first + (hi - lo)]);
                        } else {
                            for (o, v) in out.iter_mut().zip(src[first..].iter().step_by(g.stride)) {
                                *o = *v;
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], g: &ConvGeom) -> Vec<f64> {
    let p = g.positions();
    let bp = g.batch * p;
    let mut x = vec![0.0; g.batch * g.c_in * g.h * g.w];
    for b in 0..g.batch {
        for c in 0..g.c_in {
            let plane = &mut x[(b * g.c_in + c) * g.h * g.w..][..g.h * g.w];
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    let row = (c * g.kh + ki) * g.kw + kj;
                    let src = &cols[row * bp + b * p..][..p];
                    let (lo, hi) = valid_span(g, kj);
                    for oy in 0..g.ho {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize || lo == hi {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * g.w..][..g.w];
                        let inp = &src[oy * g.wo + lo..oy * g.wo + hi];
                        let first = lo * g.stride + kj - g.pad;
                        for (v, d) in inp.iter().zip(dst[first..].iter_mut().step_by(g.stride)) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
    x
}

impl Tape {
    /// 2-D cross-correlation (no kernel flip, no bias).
    ///
    /// `x` is `[C_in, H, W]` or batched `[B, C_in, H, W]`; `w` is
    /// `[C_out, C_in, kh, kw]`. Batched inputs are lowered to a single
    /// matrix product over all examples.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        let (batch, xs, unbatched) = match tx.rank() {
            3 => (1, tx.shape(), true),
            4 => (tx.shape()[0], &tx.shape()[1..], false),
            _ => {
                return Err(TensorError::Rank { op: "conv2d", expected: 4, shape: tx.shape().to_vec() });
            }
        };
        if tw.rank() != 4 {
            return Err(TensorError::Rank { op: "conv2d", expected: 4, shape: tw.shape().to_vec() });
        }
        let ws = tw.shape();
        if ws[1] != xs[0] {
            return Err(TensorError::ShapeMismatch { op: "conv2d", lhs: tx.shape().to_vec(), rhs: ws.to_vec() });
        }
        let geometry_error = || TensorError::ConvGeometry {
            input: tx.shape().to_vec(),
            kernel: ws.to_vec(),
            stride,
            pad,
        };
        let ho = conv_extent(xs[1], ws[2], stride, pad).ok_or_else(geometry_error)?;
        let wo = conv_extent(xs[2], ws[3], stride, pad).ok_or_else(geometry_error)?;
        let geom = ConvGeom {
            batch,
            c_in: xs[0],
            h: xs[1],
            w: xs[2],
            c_out: ws[0],
            kh: ws[2],
            kw: ws[3],
            stride,
            pad,
            ho,
            wo,
            unbatched,
        };
        let cols = im2col(tx.data(), &geom);
        let p = geom.positions();
        let bp = batch * p;
        let mut out_m = vec![0.0; geom.c_out * bp];
        gemm(geom.c_out, geom.k(), bp, tw.data(), false, &cols, false, 0.0, &mut out_m);
        // [C_out, B*P] -> [B, C_out, P]
        let mut out = vec![0.0; out_m.len()];
        for o in 0..geom.c_out {
            for b in 0..batch {
                out[(b * geom.c_out + o) * p..][..p].copy_from_slice(&out_m[o * bp + b * p..][..p]);
            }
        }
        let shape = if unbatched {
            vec![geom.c_out, ho, wo]
        } else {
            vec![batch, geom.c_out, ho, wo]
        };
        Ok(self.push(Tensor::from_parts(shape, out), Op::Conv2d { x, w, geom, cols }))
    }
}

pub(crate) fn conv2d_backward(
    tape: &Tape,
    x: Var,
    w: Var,
    geom: &ConvGeom,
    cols: &[f64],
    g: &[f64],
    out: &mut Vec<(Var, Vec<f64>)>,
) {
    let p = geom.positions();
    let bp = geom.batch * p;
    let mut gm = vec![0.0; g.len()];
    for b in 0..geom.batch {
        for o in 0..geom.c_out {
            gm[o * bp + b * p..][..p].copy_from_slice(&g[(b * geom.c_out + o) * p..][..p]);
        }
    }
    if tape.needs(w) {
        let mut dw = vec![0.0; geom.c_out * geom.k()];
        gemm(geom.c_out, bp, geom.k(), &gm, false, cols, true, 0.0, &mut dw);
        out.push((w, dw));
    }
    if tape.needs(x) {
        let mut dcols = vec![0.0; geom.k() * bp];
        gemm(geom.k(), geom.c_out, bp, tape.value(w).data(), true, &gm, false, 0.0, &mut dcols);
        out.push((x, col2im(&dcols, geom)));
    }
}
