//! Residual backbone with optional attention slots.
//!
//! A block computes `relu(bn2(sa(conv2(relu(bn1(conv1 x))))) + shortcut(x))`,
//! where `sa` is present only at planned coordinates and sits between the
//! second convolution and its normalization.

use lsa_tensor::{BnMode, Graph, ParamId, Tensor, Var};

use crate::attention::SelfAttention;
use crate::error::{config_err, Result};
use crate::init::{Builder, Init};
use crate::modulation::{reweight, BetaModulator, GammaModulator, Modulator};
use crate::plan::{ModulationKind, NetworkPlan, Placement};

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub channels: usize,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm {
    pub fn new(b: &mut Builder<'_>, channels: usize) -> Result<Self> {
        Ok(BatchNorm {
            channels,
            gamma: b.weight("gamma", &[channels], Init::Ones)?,
            beta: b.weight("beta", &[channels], Init::Zeros)?,
            running_mean: b.buffer("running_mean", Tensor::zeros(&[channels]))?,
            running_var: b.buffer("running_var", Tensor::ones(&[channels]))?,
        })
    }

    /// Batch statistics in training mode unless the affine weights are
    /// frozen; running statistics otherwise.
    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let frozen = g.store().entry(self.gamma).frozen;
        let (gamma, beta) = (g.param(self.gamma), g.param(self.beta));
        if g.is_training() && !frozen {
            let (y, stats) = g.batchnorm(x, gamma, beta, BnMode::Train { eps: BN_EPS })?;
            let stats = stats.expect("training mode returns statistics");
            let unbias = if stats.count > 1 { stats.count as f64 / (stats.count - 1) as f64 } else { 1.0 };
            let blend = |old: &Tensor, new: &[f64], k: f64| {
                let data = old.data().iter().zip(new).map(|(o, n)| BN_MOMENTUM * o + (1.0 - BN_MOMENTUM) * n * k).collect();
                Tensor::new(vec![new.len()], data).expect("channel vector")
            };
            let mean = blend(g.buffer(self.running_mean), &stats.mean, 1.0);
            let var = blend(g.buffer(self.running_var), &stats.var, unbias);
            g.update_buffer(self.running_mean, mean);
            g.update_buffer(self.running_var, var);
            Ok(y)
        } else {
            let (mean, var) = (g.buffer(self.running_mean).data(), g.buffer(self.running_var).data());
            Ok(g.batchnorm(x, gamma, beta, BnMode::Eval { mean, var, eps: BN_EPS })?.0)
        }
    }
}

/// What an attention slot needs to know when it is built.
#[derive(Clone, Copy, Debug)]
pub struct SaSpec {
    pub c_bar_ratio: usize,
    pub modulation: ModulationKind,
    pub squash: crate::plan::GammaSquash,
    pub h_dim: usize,
    pub proj_dim: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct SaSlot {
    pub attention: SelfAttention,
    pub modulator: Option<Modulator>,
}

impl SaSlot {
    pub fn new(b: &mut Builder<'_>, channels: usize, spec: &SaSpec) -> Result<Self> {
        let c_bar = channels / spec.c_bar_ratio;
        let shared = spec.modulation != ModulationKind::Gamma;
        let attention = SelfAttention::new(&mut b.scope("sa"), channels, c_bar, shared)?;
        let modulator = match spec.modulation {
            ModulationKind::None => None,
            ModulationKind::Gamma => Some(Modulator::Gamma(GammaModulator::new(&mut b.scope("mod"), spec.h_dim, spec.squash)?)),
            ModulationKind::Beta => {
                let d = spec.proj_dim.unwrap_or(channels);
                Some(Modulator::Beta(BetaModulator::new(&mut b.scope("mod"), spec.h_dim, channels, d)?))
            }
        };
        Ok(SaSlot { attention, modulator })
    }

    /// Applies attention to every example of `y: [B, C, H, W]`. Returns the
    /// new map and, for γ-modulated slots, the per-example gates `[B]`.
    pub fn forward(&self, g: &mut Graph<'_>, y: Var, cond: Option<Var>, label: &str) -> Result<(Var, Option<Var>)> {
        let (b, c, hh, ww) = match *g.shape(y) {
            [b, c, h, w] => (b, c, h, w),
            ref other => return Err(config_err(format!("attention slot expects [B, C, H, W], got {other:?}"))),
        };
        let n = hh * ww;
        let (gates, proj) = match (&self.modulator, cond) {
            (None, _) => (None, None),
            (Some(_), None) => {
                return Err(config_err(format!("block {label} is modulated but no question encoding was given")))
            }
            (Some(Modulator::Gamma(m)), Some(h)) => (Some(m.gates(g, h)?), None),
            (Some(Modulator::Beta(m)), Some(h)) => (None, Some(m.project(g, h)?)),
        };
        if let (Some(h), true) = (cond, self.modulator.is_some()) {
            if g.shape(h)[0] != b {
                return Err(config_err(format!("question batch {} does not match image batch {b}", g.shape(h)[0])));
            }
        }
        let mut outs = Vec::with_capacity(b);
        for i in 0..b {
            let xi = g.select(y, i)?;
            let xi = g.reshape(xi, &[c, n])?;
            let maps = self.attention.maps(g, xi)?;
            if g.is_recording() {
                let w = g.value(maps.weights).clone();
                g.record(format!("{label}.weights"), &w);
            }
            let mut o = self.attention.output(g, xi, maps.weights)?;
            if let (Some(p), Some(Modulator::Beta(m))) = (proj, &self.modulator) {
                let pi = g.select(p, i)?;
                let beta = m.weights(g, xi, pi)?;
                if g.is_recording() {
                    let v = g.value(beta).clone();
                    g.record(format!("{label}.beta_h"), &v);
                }
                o = reweight(g, o, beta)?;
            }
            let gate = match gates {
                Some(gv) => Some(g.select(gv, i)?),
                None => None,
            };
            let yi = self.attention.mix(g, xi, o, gate)?;
            outs.push(g.reshape(yi, &[c, hh, ww])?);
        }
        Ok((g.stack(&outs)?, gates))
    }
}

#[derive(Clone, Debug)]
pub struct ResidualBlock {
    pub placement: Placement,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub conv1: ParamId,
    pub bn1: BatchNorm,
    pub conv2: ParamId,
    pub bn2: BatchNorm,
    /// 1×1 projection, present iff channels or stride change.
    pub shortcut: Option<ParamId>,
    pub sa: Option<SaSlot>,
}

impl ResidualBlock {
    pub fn new(
        b: &mut Builder<'_>,
        placement: Placement,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        sa: Option<&SaSpec>,
    ) -> Result<Self> {
        let conv1 = b.weight("conv1", &[out_channels, in_channels, 3, 3], Init::HeUniform { fan_in: in_channels * 9 })?;
        let bn1 = BatchNorm::new(&mut b.scope("bn1"), out_channels)?;
        let conv2 = b.weight("conv2", &[out_channels, out_channels, 3, 3], Init::HeUniform { fan_in: out_channels * 9 })?;
        let bn2 = BatchNorm::new(&mut b.scope("bn2"), out_channels)?;
        let shortcut = if in_channels != out_channels || stride != 1 {
            Some(b.weight("shortcut", &[out_channels, in_channels, 1, 1], Init::HeUniform { fan_in: in_channels })?)
        } else {
            None
        };
        let sa = sa.map(|spec| SaSlot::new(b, out_channels, spec)).transpose()?;
        Ok(ResidualBlock { placement, in_channels, out_channels, stride, conv1, bn1, conv2, bn2, shortcut, sa })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var, cond: Option<Var>) -> Result<(Var, Option<Var>)> {
        match g.shape(x) {
            [_, c, _, _] if *c == self.in_channels => {}
            other => {
                return Err(config_err(format!(
                    "block {} expects [B, {}, H, W], got {other:?}",
                    self.placement, self.in_channels
                )))
            }
        }
        let w1 = g.param(self.conv1);
        let h = g.conv2d(x, w1, self.stride, 1)?;
        let h = self.bn1.forward(g, h)?;
        let h = g.relu(h);
        let w2 = g.param(self.conv2);
        let mut h = g.conv2d(h, w2, 1, 1)?;
        let mut gates = None;
        if let Some(slot) = &self.sa {
            let (y, gv) = slot.forward(g, h, cond, &self.placement.to_string())?;
            h = y;
            gates = gv;
        }
        let h = self.bn2.forward(g, h)?;
        let skip = match self.shortcut {
            Some(id) => {
                let ws = g.param(id);
                g.conv2d(x, ws, self.stride, 0)?
            }
            None => x,
        };
        let sum = g.add(h, skip)?;
        Ok((g.relu(sum), gates))
    }
}

/// Gates produced by γ-modulated slots during one forward pass.
pub type GateTrace = Vec<(Placement, Var)>;

#[derive(Clone, Debug)]
pub struct Backbone {
    pub plan: NetworkPlan,
    pub stem: ParamId,
    pub stem_bn: BatchNorm,
    pub blocks: Vec<ResidualBlock>,
}

impl Backbone {
    /// `h_dim` sizes the modulators; it is ignored when the plan has none.
    pub fn new(b: &mut Builder<'_>, plan: &NetworkPlan, h_dim: usize) -> Result<Self> {
        plan.validate()?;
        let w1 = plan.stages[0].width;
        let stem = b.weight("stem.conv", &[w1, plan.input_channels, 3, 3], Init::HeUniform { fan_in: plan.input_channels * 9 })?;
        let stem_bn = BatchNorm::new(&mut b.scope("stem.bn"), w1)?;
        let spec = SaSpec {
            c_bar_ratio: plan.c_bar_ratio,
            modulation: plan.modulation,
            squash: plan.gamma_squash,
            h_dim,
            proj_dim: plan.proj_dim,
        };
        let mut blocks = Vec::new();
        let mut in_ch = w1;
        for (si, stage) in plan.stages.iter().enumerate() {
            for bi in 0..stage.blocks {
                let placement = Placement { stage: si + 1, block: bi + 1 };
                let stride = if bi == 0 { stage.stride } else { 1 };
                let sa = plan.placements.contains(&placement).then_some(&spec);
                let mut scope = b.scope(&format!("s{}b{}", si + 1, bi + 1));
                blocks.push(ResidualBlock::new(&mut scope, placement, in_ch, stage.width, stride, sa)?);
                in_ch = stage.width;
            }
        }
        Ok(Backbone { plan: plan.clone(), stem, stem_bn, blocks })
    }

    pub fn is_modulated(&self) -> bool {
        self.blocks.iter().any(|b| b.sa.as_ref().is_some_and(|s| s.modulator.is_some()))
    }

    /// Final stage output `[B, C, H, W]` plus any per-example gates.
    pub fn forward(&self, g: &mut Graph<'_>, images: Var, cond: Option<Var>) -> Result<(Var, GateTrace)> {
        let p = &self.plan;
        match g.shape(images) {
            [_, c, h, w] if *c == p.input_channels && *h == p.input_size && *w == p.input_size => {}
            other => {
                return Err(config_err(format!(
                    "backbone expects [B, {}, {s}, {s}] images, got {other:?}",
                    p.input_channels,
                    s = p.input_size
                )))
            }
        }
        let w = g.param(self.stem);
        let x = g.conv2d(images, w, p.stem_stride, 1)?;
        let x = self.stem_bn.forward(g, x)?;
        let mut x = g.relu(x);
        let mut trace = Vec::new();
        for block in &self.blocks {
            let (y, gates) = block.forward(g, x, cond)?;
            x = y;
            if let Some(gv) = gates {
                trace.push((block.placement, gv));
            }
        }
        Ok((x, trace))
    }

    /// Features as `[B, C, N]` with `N = H·W`.
    pub fn extract_features(&self, g: &mut Graph<'_>, images: Var, cond: Option<Var>) -> Result<(Var, GateTrace)> {
        let (x, trace) = self.forward(g, images, cond)?;
        let (b, c, h, w) = match *g.shape(x) {
            [b, c, h, w] => (b, c, h, w),
            _ => unreachable!("blocks emit rank-4 maps"),
        };
        Ok((g.reshape(x, &[b, c, h * w])?, trace))
    }
}
