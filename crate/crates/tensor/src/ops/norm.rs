use crate::error::{Result, TensorError};
use crate::tape::{Op, Tape, Var};
use crate::tensor::Tensor;

/// How a batch-norm node normalizes its input.
#[derive(Clone, Copy, Debug)]
pub enum BnMode<'a> {
    /// Normalize with the statistics of the current batch.
    Train { eps: f64 },
    /// Normalize with externally tracked running statistics.
    Eval { mean: &'a [f64], var: &'a [f64], eps: f64 },
}

/// Per-channel statistics of a training-mode batch-norm call.
#[derive(Clone, Debug, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    /// Biased (population) variance.
    pub var: Vec<f64>,
    /// Elements reduced per channel.
    pub count: usize,
}

pub(crate) struct BnSaved<'a> {
    pub x: Var,
    pub gamma: Var,
    pub beta: Var,
    pub xhat: &'a [f64],
    pub inv_std: &'a [f64],
    pub train: bool,
}

impl Tape {
    /// Per-channel batch normalization of `[B, C, ...]` with affine `gamma`, `beta` (`[C]`).
    pub fn batchnorm(&mut self, x: Var, gamma: Var, beta: Var, mode: BnMode<'_>) -> Result<(Var, Option<BnStats>)> {
        let tx = self.value(x);
        if tx.rank() < 2 {
            return Err(TensorError::Rank { op: "batchnorm", expected: 4, shape: tx.shape().to_vec() });
        }
        let (b, c) = (tx.shape()[0], tx.shape()[1]);
        let spatial: usize = tx.shape()[2..].iter().product();
        for p in [gamma, beta] {
            if self.value(p).shape() != [c] {
                return Err(TensorError::ShapeMismatch {
                    op: "batchnorm",
                    lhs: tx.shape().to_vec(),
                    rhs: self.value(p).shape().to_vec(),
                });
            }
        }
        let count = b * spatial;
        let xd = tx.data();
        let channel = |ch: usize| {
            (0..b).flat_map(move |bi| {
                let start = (bi * c + ch) * spatial;
                start..start + spatial
            })
        };
        let (mean, var, eps, train) = match mode {
            BnMode::Train { eps } => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let m = channel(ch).map(|i| xd[i]).sum::<f64>() / count as f64;
                    mean[ch] = m;
                    var[ch] = channel(ch).map(|i| (xd[i] - m).powi(2)).sum::<f64>() / count as f64;
                }
                (mean, var, eps, true)
            }
            BnMode::Eval { mean, var, eps } => {
                if mean.len() != c || var.len() != c {
                    return Err(TensorError::ShapeMismatch {
                        op: "batchnorm",
                        lhs: tx.shape().to_vec(),
                        rhs: vec![mean.len(), var.len()],
                    });
                }
                (mean.to_vec(), var.to_vec(), eps, false)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (gd, bd) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![0.0; xd.len()];
        let mut y = vec![0.0; xd.len()];
        for ch in 0..c {
            for i in channel(ch) {
                let h = (xd[i] - mean[ch]) * inv_std[ch];
                xhat[i] = h;
                y[i] = gd[ch] * h + bd[ch];
            }
        }
        let out = Tensor::from_parts(tx.shape().to_vec(), y);
        let stats = train.then_some(BnStats { mean, var, count });
        let v = self.push(out, Op::BatchNorm { x, gamma, beta, xhat, inv_std, train });
        Ok((v, stats))
    }
}

pub(crate) fn batchnorm_backward(tape: &Tape, s: BnSaved<'_>, g: &[f64], out: &mut Vec<(Var, Vec<f64>)>) {
    let shape = tape.value(s.x).shape();
    let (b, c) = (shape[0], shape[1]);
    let spatial: usize = shape[2..].iter().product();
    let count = (b * spatial) as f64;
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for bi in 0..b {
        for ch in 0..c {
            let start = (bi * c + ch) * spatial;
            for i in start..start + spatial {
                dbeta[ch] += g[i];
                dgamma[ch] += g[i] * s.xhat[i];
            }
        }
    }
    if tape.needs(s.x) {
        let gd = tape.value(s.gamma).data();
        let mut dx = vec![0.0; g.len()];
        for bi in 0..b {
            for ch in 0..c {
                let start = (bi * c + ch) * spatial;
                let k = gd[ch] * s.inv_std[ch];
                for i in start..start + spatial {
                    dx[i] = if s.train {
                        k * (g[i] - dbeta[ch] / count - s.xhat[i] * dgamma[ch] / count)
                    } else {
                        k * g[i]
                    };
                }
            }
        }
        out.push((s.x, dx));
    }
    if tape.needs(s.gamma) {
        out.push((s.gamma, dgamma));
    }
    if tape.needs(s.beta) {
        out.push((s.beta, dbeta));
    }
}
