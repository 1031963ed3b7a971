//! Question-conditioned control of a self-attention layer.
//!
//! [`GammaModulator`] replaces the shared gate with a per-example scalar
//! computed linearly from the question encoding. [`BetaModulator`] produces
//! a distribution over the `N` locations that rescales the columns of the
//! attention output before gating.

use lsa_tensor::{Graph, ParamId, Var};

use crate::error::{config_err, Result};
use crate::init::{Builder, Init};
use crate::plan::{GammaSquash, ModulationKind};

/// Parameters added per modulated layer.
pub fn modulation_parameter_count(kind: ModulationKind, channels: usize, h_dim: usize, proj_dim: usize) -> Result<usize> {
    match kind {
        ModulationKind::None => Ok(0),
        ModulationKind::Gamma if h_dim > 0 => Ok(h_dim),
        ModulationKind::Beta if h_dim > 0 && channels > 0 && proj_dim > 0 => Ok(proj_dim * (h_dim + channels)),
        _ => Err(config_err(format!(
            "{kind} modulation needs positive dimensions (C={channels}, h_dim={h_dim}, proj_dim={proj_dim})"
        ))),
    }
}

#[derive(Clone, Debug)]
pub struct GammaModulator {
    pub h_dim: usize,
    /// `[h_dim, 1]`, zero at init so the squash-free gate starts closed.
    pub w_h: ParamId,
    pub squash: GammaSquash,
}

impl GammaModulator {
    pub fn new(b: &mut Builder<'_>, h_dim: usize, squash: GammaSquash) -> Result<Self> {
        let w_h = b.weight("w_h", &[h_dim, 1], Init::Zeros)?;
        Ok(GammaModulator { h_dim, w_h, squash })
    }

    /// Per-example gates `[B]` for encodings `h: [B, h_dim]`.
    pub fn gates(&self, g: &mut Graph<'_>, h: Var) -> Result<Var> {
        let b = match g.shape(h) {
            [b, d] if *d == self.h_dim => *b,
            other => return Err(config_err(format!("gamma modulator expects [B, {}], got {other:?}", self.h_dim))),
        };
        let w = g.param(self.w_h);
        let logits = g.matmul(h, w)?;
        let logits = g.reshape(logits, &[b])?;
        Ok(match self.squash {
            GammaSquash::None => logits,
            GammaSquash::Sigmoid => g.sigmoid(logits),
        })
    }
}

#[derive(Clone, Debug)]
pub struct BetaModulator {
    pub h_dim: usize,
    pub channels: usize,
    pub proj_dim: usize,
    /// `[h_dim, D]`
    pub w_p: ParamId,
    /// `[C, D]`
    pub w_q: ParamId,
}

impl BetaModulator {
    pub fn new(b: &mut Builder<'_>, h_dim: usize, channels: usize, proj_dim: usize) -> Result<Self> {
        modulation_parameter_count(ModulationKind::Beta, channels, h_dim, proj_dim)?;
        let w_p = b.weight("w_p", &[h_dim, proj_dim], Init::XavierUniform { fan_in: h_dim, fan_out: proj_dim })?;
        let w_q = b.weight("w_q", &[channels, proj_dim], Init::XavierUniform { fan_in: channels, fan_out: proj_dim })?;
        Ok(BetaModulator { h_dim, channels, proj_dim, w_p, w_q })
    }

    pub fn param_count(&self) -> usize {
        self.proj_dim * (self.h_dim + self.channels)
    }

    /// `p(h) = h · W_p` for a batch `h: [B, h_dim]`, giving `[B, D]`.
    pub fn project(&self, g: &mut Graph<'_>, h: Var) -> Result<Var> {
        if !matches!(g.shape(h), [_, d] if *d == self.h_dim) {
            return Err(config_err(format!("beta modulator expects [B, {}], got {:?}", self.h_dim, g.shape(h))));
        }
        let w = g.param(self.w_p);
        Ok(g.matmul(h, w)?)
    }

    /// Location weights `[N]` for one example `x: [C, N]` and its projected
    /// question `p: [D]`: `softmax_i((W_qᵀ x_i) · p)`.
    pub fn weights(&self, g: &mut Graph<'_>, x: Var, p: Var) -> Result<Var> {
        let n = match g.shape(x) {
            [c, n] if *c == self.channels => *n,
            other => return Err(config_err(format!("beta modulator expects [{}, N], got {other:?}", self.channels))),
        };
        if g.shape(p) != [self.proj_dim] {
            return Err(config_err(format!("projected question has shape {:?}, expected [{}]", g.shape(p), self.proj_dim)));
        }
        let xt = g.transpose(x)?;
        let wq = g.param(self.w_q);
        let q = g.matmul(xt, wq)?;
        let pcol = g.reshape(p, &[self.proj_dim, 1])?;
        let s = g.matmul(q, pcol)?;
        let s = g.reshape(s, &[n])?;
        Ok(g.softmax(s, 0)?)
    }
}

/// `o'_j = β_j · o_j` for `o: [C, N]` and `beta: [N]`.
pub fn reweight(g: &mut Graph<'_>, o: Var, beta: Var) -> Result<Var> {
    Ok(g.scale_cols(o, beta)?)
}

#[derive(Clone, Debug)]
pub enum Modulator {
    Gamma(GammaModulator),
    Beta(BetaModulator),
}

impl Modulator {
    pub fn param_count(&self) -> usize {
        match self {
            Modulator::Gamma(m) => m.h_dim,
            Modulator::Beta(m) => m.param_count(),
        }
    }
}
