//! Backbone, question encoder and a top-down attention head assembled into
//! a closed-answer classifier.

use lsa_tensor::{Graph, ParamId, ParamStore, Tensor, Var};

use crate::backbone::{Backbone, GateTrace};
use crate::encoder::{CellKind, QuestionEncoder};
use crate::error::{config_err, Result};
use crate::init::{Builder, Init};
use crate::plan::NetworkPlan;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub plan: NetworkPlan,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub cell: CellKind,
    /// Width of the location-scoring space of the head.
    pub attention_dim: usize,
    /// Hidden width of the two-layer classifier.
    pub classifier_dim: usize,
    pub answers: Vec<String>,
}

impl ModelConfig {
    pub fn desk_default(vocab_size: usize, answers: Vec<String>) -> Self {
        ModelConfig {
            plan: NetworkPlan::desk_default(),
            vocab_size,
            embed_dim: 32,
            hidden_dim: 64,
            cell: CellKind::Gated,
            attention_dim: 64,
            classifier_dim: 128,
            answers,
        }
    }
}

/// Coarse partition of the parameter set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    Backbone,
    /// Attention projections `W_f`, `W_g`, `W_k`.
    Attention,
    /// Shared residual gates of attention layers.
    Gate,
    Modulation,
    Encoder,
    Head,
}

pub fn param_group(name: &str) -> ParamGroup {
    if name.starts_with("encoder.") {
        ParamGroup::Encoder
    } else if name.starts_with("head.") {
        ParamGroup::Head
    } else if name.contains(".sa.gamma") {
        ParamGroup::Gate
    } else if name.contains(".sa.") {
        ParamGroup::Attention
    } else if name.contains(".mod.") {
        ParamGroup::Modulation
    } else {
        ParamGroup::Backbone
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamFilter {
    All,
    SaOnly,
    ModulationOnly,
}

impl std::str::FromStr for ParamFilter {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(ParamFilter::All),
            "sa_only" | "sa" => Ok(ParamFilter::SaOnly),
            "modulation_only" | "modulation" => Ok(ParamFilter::ModulationOnly),
            other => Err(config_err(format!("unknown filter `{other}` (all|sa_only|modulation_only)"))),
        }
    }
}

#[derive(Clone, Debug)]
struct TopDownHead {
    u: ParamId,
    v: ParamId,
    w: ParamId,
    p: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl TopDownHead {
    fn new(b: &mut Builder<'_>, c: usize, h: usize, k: usize, f: usize, answers: usize) -> Result<Self> {
        let x = |i, o| Init::XavierUniform { fan_in: i, fan_out: o };
        Ok(TopDownHead {
            u: b.weight("u", &[k, c], x(c, k))?,
            v: b.weight("v", &[h, k], x(h, k))?,
            w: b.weight("w", &[1, k], x(k, 1))?,
            p: b.weight("p", &[h, c], x(h, c))?,
            w1: b.weight("w1", &[c, f], x(c, f))?,
            b1: b.weight("b1", &[f], Init::Zeros)?,
            w2: b.weight("w2", &[f, answers], x(f, answers))?,
            b2: b.weight("b2", &[answers], Init::Zeros)?,
        })
    }

    /// `features: [B, C, N]`, `h: [B, H]` to logits `[B, A]`.
    fn forward(&self, g: &mut Graph<'_>, features: Var, h: Var) -> Result<Var> {
        let (b, c, n) = match *g.shape(features) {
            [b, c, n] => (b, c, n),
            ref other => return Err(config_err(format!("head expects [B, C, N] features, got {other:?}"))),
        };
        let (u, v, w) = (g.param(self.u), g.param(self.v), g.param(self.w));
        let hv = g.matmul(h, v)?;
        let mut attended = Vec::with_capacity(b);
        for i in 0..b {
            let f = g.select(features, i)?;
            let uf = g.matmul(u, f)?;
            let hvi = g.select(hv, i)?;
            let joint = g.scale_rows(uf, hvi)?;
            let joint = g.relu(joint);
            let s = g.matmul(w, joint)?;
            let s = g.reshape(s, &[n])?;
            let alpha = g.softmax(s, 0)?;
            if g.is_recording() {
                let a = g.value(alpha).clone();
                g.record("head.alpha", &a);
            }
            let col = g.reshape(alpha, &[n, 1])?;
            let pooled = g.matmul(f, col)?;
            attended.push(g.reshape(pooled, &[c])?);
        }
        let attended = g.stack(&attended)?;
        let p = g.param(self.p);
        let q = g.matmul(h, p)?;
        let q = g.relu(q);
        let fused = g.mul(attended, q)?;
        let (w1, b1, w2, b2) = (g.param(self.w1), g.param(self.b1), g.param(self.w2), g.param(self.b2));
        let hidden = g.matmul(fused, w1)?;
        let hidden = g.add_row(hidden, b1)?;
        let hidden = g.relu(hidden);
        let logits = g.matmul(hidden, w2)?;
        Ok(g.add_row(logits, b2)?)
    }
}

pub struct ModelOutput {
    pub logits: Var,
    /// Question encodings `[B, H]`.
    pub encoding: Var,
    pub gates: GateTrace,
}

#[derive(Clone, Debug)]
pub struct VqaModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub backbone: Backbone,
    pub encoder: QuestionEncoder,
    head: TopDownHead,
}

impl VqaModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        if config.answers.is_empty() {
            return Err(config_err("answer space is empty"));
        }
        if config.attention_dim == 0 || config.classifier_dim == 0 {
            return Err(config_err("head dimensions must be positive"));
        }
        let mut store = ParamStore::new();
        let mut b = Builder::new(&mut store, seed);
        let backbone = Backbone::new(&mut b.scope("backbone"), &config.plan, config.hidden_dim)?;
        let encoder = QuestionEncoder::new(
            &mut b.scope("encoder"),
            config.vocab_size,
            config.embed_dim,
            config.hidden_dim,
            config.cell,
        )?;
        let (c, _, _) = config.plan.feature_shape();
        let head = TopDownHead::new(
            &mut b.scope("head"),
            c,
            config.hidden_dim,
            config.attention_dim,
            config.classifier_dim,
            config.answers.len(),
        )?;
        Ok(VqaModel { config, store, backbone, encoder, head })
    }

    pub fn forward(&self, g: &mut Graph<'_>, images: &Tensor, tokens: &[Vec<usize>]) -> Result<ModelOutput> {
        if images.shape().first() != Some(&tokens.len()) {
            return Err(config_err(format!(
                "{} questions for image batch {:?}",
                tokens.len(),
                images.shape()
            )));
        }
        let encoding = self.encoder.forward(g, tokens)?;
        let x = g.constant(images.clone());
        let cond = self.backbone.is_modulated().then_some(encoding);
        let (features, gates) = self.backbone.extract_features(g, x, cond)?;
        let logits = self.head.forward(g, features, encoding)?;
        Ok(ModelOutput { logits, encoding, gates })
    }

    /// Logits `[B, A]` in evaluation mode.
    pub fn logits(&self, images: &Tensor, tokens: &[Vec<usize>]) -> Result<Tensor> {
        let mut g = Graph::new(&self.store, false, false);
        let out = self.forward(&mut g, images, tokens)?;
        Ok(g.value(out.logits).clone())
    }

    /// Answer indices by argmax, ties to the lowest index.
    pub fn predict(&self, images: &Tensor, tokens: &[Vec<usize>]) -> Result<Vec<usize>> {
        let logits = self.logits(images, tokens)?;
        let a = self.config.answers.len();
        Ok(logits.data().chunks(a).map(argmax).collect())
    }

    pub fn count_group(&self, group: ParamGroup) -> usize {
        self.store.count_weights(|n| param_group(n) == group)
    }

    pub fn count_parameters(&self, filter: ParamFilter) -> usize {
        match filter {
            ParamFilter::All => self.store.count_weights(|_| true),
            ParamFilter::SaOnly => self.count_group(ParamGroup::Attention),
            ParamFilter::ModulationOnly => self.count_group(ParamGroup::Modulation),
        }
    }

    /// Freezes every backbone weight outside attention slots.
    pub fn freeze_backbone(&mut self) {
        let ids: Vec<_> = self
            .store
            .entries()
            .filter(|(_, e)| param_group(&e.name) == ParamGroup::Backbone)
            .map(|(id, _)| id)
            .collect();
        for id in ids {
            self.store.set_frozen(id, true);
        }
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.0; 5]), 0);
        assert_eq!(argmax(&[0.0, 1.0, 2.0, 3.0, 1.0]), 3);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn groups_from_names() {
        assert_eq!(param_group("backbone.s3b1.sa.w_f"), ParamGroup::Attention);
        assert_eq!(param_group("backbone.s3b1.sa.gamma"), ParamGroup::Gate);
        assert_eq!(param_group("backbone.s3b1.mod.w_h"), ParamGroup::Modulation);
        assert_eq!(param_group("backbone.s3b1.conv1"), ParamGroup::Backbone);
        assert_eq!(param_group("encoder.w_z"), ParamGroup::Encoder);
        assert_eq!(param_group("head.u"), ParamGroup::Head);
    }
}
