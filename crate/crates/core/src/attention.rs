//! Non-local self-attention over the locations of one feature map.
//!
//! Inputs are single examples laid out as `[C, N]`. For output location `j`
//! the weights `β[j, ·]` over source locations `i` sum to one; the tensor
//! returned by [`SelfAttention::maps`] stores them as `weights[i][j]`, so
//! every *column* is a distribution and `o = k(x) · weights`.

use lsa_tensor::{Graph, ParamId, Var};

use crate::error::{config_err, Result};
use crate::init::{Builder, Init};

/// `2·C·C̄ + C²`: two reducing projections and one full value projection.
pub fn sa_parameter_count(channels: usize, c_bar: usize) -> usize {
    2 * channels * c_bar + channels * channels
}

#[derive(Clone, Debug)]
pub struct SelfAttention {
    pub channels: usize,
    pub c_bar: usize,
    /// `[C, C̄]`
    pub w_f: ParamId,
    /// `[C, C̄]`
    pub w_g: ParamId,
    /// `[C, C]`
    pub w_k: ParamId,
    /// Shared residual gate, `[1]`, zero at init. Absent when a modulator
    /// supplies a per-example gate instead.
    pub gamma: Option<ParamId>,
}

/// Tape handles for one example's attention maps, both `[N, N]`.
#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub scores: Var,
    pub weights: Var,
}

impl SelfAttention {
    pub fn new(b: &mut Builder<'_>, channels: usize, c_bar: usize, shared_gamma: bool) -> Result<Self> {
        if channels == 0 || c_bar == 0 || c_bar > channels {
            return Err(config_err(format!("attention needs 0 < c_bar <= C, got C={channels}, c_bar={c_bar}")));
        }
        let proj = Init::XavierUniform { fan_in: channels, fan_out: c_bar };
        let w_f = b.weight("w_f", &[channels, c_bar], proj)?;
        let w_g = b.weight("w_g", &[channels, c_bar], proj)?;
        let w_k = b.weight("w_k", &[channels, channels], Init::XavierUniform { fan_in: channels, fan_out: channels })?;
        let gamma = if shared_gamma { Some(b.weight("gamma", &[1], Init::Zeros)?) } else { None };
        Ok(SelfAttention { channels, c_bar, w_f, w_g, w_k, gamma })
    }

    /// Projection weights only; the gate is counted separately.
    pub fn param_count(&self) -> usize {
        sa_parameter_count(self.channels, self.c_bar)
    }

    fn check(&self, g: &Graph<'_>, x: Var) -> Result<usize> {
        match g.shape(x) {
            [c, n] if *c == self.channels => Ok(*n),
            other => Err(config_err(format!(
                "attention expects [{}, N] input, got {:?}",
                self.channels, other
            ))),
        }
    }

    /// `scores[i][j] = f(x_i)·g(x_j)`, normalized over `i` for every `j`.
    pub fn maps(&self, g: &mut Graph<'_>, x: Var) -> Result<AttentionVars> {
        self.check(g, x)?;
        let xt = g.transpose(x)?;
        let (wf, wg) = (g.param(self.w_f), g.param(self.w_g));
        let f = g.matmul(xt, wf)?;
        let gg = g.matmul(xt, wg)?;
        let gt = g.transpose(gg)?;
        let scores = g.matmul(f, gt)?;
        let weights = g.softmax(scores, 0)?;
        Ok(AttentionVars { scores, weights })
    }

    /// `o_j = Σ_i β[j, i] · W_k x_i`, given `weights` laid out as in [`maps`](Self::maps).
    pub fn output(&self, g: &mut Graph<'_>, x: Var, weights: Var) -> Result<Var> {
        let n = self.check(g, x)?;
        if g.shape(weights) != [n, n] {
            return Err(config_err(format!("attention weights {:?} do not match N={n}", g.shape(weights))));
        }
        let wk = g.param(self.w_k);
        let k = g.matmul(wk, x)?;
        Ok(g.matmul(k, weights)?)
    }

    /// `y = gate · o + x`. Uses the shared `γ` unless `gate` is given.
    pub fn mix(&self, g: &mut Graph<'_>, x: Var, o: Var, gate: Option<Var>) -> Result<Var> {
        let gate = match (gate, self.gamma) {
            (Some(v), _) => v,
            (None, Some(id)) => g.param(id),
            (None, None) => return Err(config_err("attention layer has no shared gamma; a gate is required")),
        };
        let scaled = g.scale_by(o, gate)?;
        Ok(g.add(scaled, x)?)
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let maps = self.maps(g, x)?;
        let o = self.output(g, x, maps.weights)?;
        self.mix(g, x, o, None)
    }
}
