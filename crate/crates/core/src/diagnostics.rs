//! Named gradient-check targets and attention-map dumps.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lsa_tensor::gradcheck::{gradcheck, GradCheckConfig, GradCheckReport};
use lsa_tensor::{matn, Graph, ParamId, ParamKind, ParamStore, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::SelfAttention;
use crate::backbone::{ResidualBlock, SaSlot, SaSpec};
use crate::data::io::render_batch;
use crate::data::{answer_space, Dataset, Sample};
use crate::encoder::{CellKind, QuestionEncoder, PAD};
use crate::error::{config_err, Error, Result};
use crate::init::{stream_seed, Builder};
use crate::model::{ModelConfig, VqaModel};
use crate::plan::{GammaSquash, ModulationKind, NetworkPlan, Placement, StagePlan};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    Linear,
    Sa,
    GammaMod,
    GammaModSigmoid,
    BetaMod,
    Block,
    Encoder,
    /// Question encoder feeding a β-modulated attention layer.
    Modulated,
    Model,
}

impl Component {
    pub const ALL: [Component; 9] = [
        Component::Linear,
        Component::Sa,
        Component::GammaMod,
        Component::GammaModSigmoid,
        Component::BetaMod,
        Component::Block,
        Component::Encoder,
        Component::Modulated,
        Component::Model,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::Linear => "linear",
            Component::Sa => "sa",
            Component::GammaMod => "gamma-mod",
            Component::GammaModSigmoid => "gamma-mod-sigmoid",
            Component::BetaMod => "beta-mod",
            Component::Block => "block",
            Component::Encoder => "encoder",
            Component::Modulated => "modulated",
            Component::Model => "model",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Component::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            let names: Vec<_> = Component::ALL.iter().map(|c| c.name()).collect();
            config_err(format!("unknown component `{s}` ({})", names.join("|")))
        })
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).expect("valid shape")
}

/// `Σ out ⊙ R` for a fixed random `R`, so every output coordinate matters.
fn probe(g: &mut Graph<'_>, out: Var, weights: &Tensor) -> Result<Var> {
    let r = g.constant(weights.clone());
    let p = g.mul(out, r)?;
    Ok(g.sum(p))
}

/// Replaces every zero-initialized gate so the gated branches carry gradient.
fn open_gates(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    let ids: Vec<ParamId> = store
        .entries()
        .filter(|(_, e)| e.name.ends_with(".gamma") && !e.name.contains(".bn") || e.name.ends_with("w_h"))
        .map(|(id, _)| id)
        .collect();
    for id in ids {
        let shape = store.get(id).shape().to_vec();
        *store.get_mut(id) = if shape == [1] { Tensor::vector(vec![0.5]) } else { random(rng, &shape, 0.3) };
    }
}

fn questions(rng: &mut ChaCha8Rng, batch: usize, len: usize, vocab: usize) -> Vec<Vec<usize>> {
    (0..batch)
        .map(|_| {
            let real = rng.gen_range(1..=len);
            (0..len).map(|t| if t < real { rng.gen_range(1..vocab) } else { PAD }).collect()
        })
        .collect()
}

fn slot_spec(modulation: ModulationKind, squash: GammaSquash, h_dim: usize) -> SaSpec {
    SaSpec { c_bar_ratio: 4, modulation, squash, h_dim, proj_dim: Some(5) }
}

/// Plan of the full-model check: the acceptance network with one attention
/// slot at the last block.
pub fn check_plan() -> NetworkPlan {
    let mut plan = NetworkPlan::desk_default();
    plan.stem_stride = 2;
    plan.stages = vec![
        StagePlan { blocks: 1, width: 8, stride: 1 },
        StagePlan { blocks: 1, width: 16, stride: 2 },
        StagePlan { blocks: 1, width: 16, stride: 2 },
    ];
    plan.c_bar_ratio = 4;
    plan.placements = [Placement { stage: 3, block: 1 }].into_iter().collect();
    plan.modulation = ModulationKind::Beta;
    plan
}

/// Central-difference check of one registered component, with all inputs
/// and parameters drawn from `seed`.
pub fn gradcheck_component(component: Component, seed: u64) -> Result<GradCheckReport> {
    gradcheck_with(component, &GradCheckConfig { seed, ..GradCheckConfig::default() })
}

/// As [`gradcheck_component`] with explicit step, tolerance and sampling.
pub fn gradcheck_with(component: Component, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let seed = cfg.seed;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &format!("gradcheck/{component}")));
    let mut store = ParamStore::new();
    let input = |store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, shape: &[usize]| -> Result<ParamId> {
        Ok(store.insert(name, random(rng, shape, 1.0), ParamKind::Weight)?)
    };
    match component {
        Component::Linear => {
            let x = input(&mut store, &mut rng, "x", &[4, 5])?;
            let w = input(&mut store, &mut rng, "w", &[5, 3])?;
            let r = random(&mut rng, &[4, 3], 1.0);
            let targets = store.weight_ids();
            gradcheck(&mut store, &targets, cfg, |g| {
                let (xv, wv) = (g.param(x), g.param(w));
                let y = g.matmul(xv, wv)?;
                probe(g, y, &r)
            })
        }
        Component::Sa => {
            let x = input(&mut store, &mut rng, "x", &[8, 6])?;
            let layer = SelfAttention::new(&mut Builder::new(&mut store, seed).scope("sa"), 8, 2, true)?;
            open_gates(&mut store, &mut rng);
            let r = random(&mut rng, &[8, 6], 1.0);
            let targets = store.weight_ids();
            gradcheck(&mut store, &targets, cfg, |g| {
                let xv = g.param(x);
                let y = layer.forward(g, xv)?;
                probe(g, y, &r)
            })
        }
        Component::GammaMod | Component::GammaModSigmoid | Component::BetaMod => {
            let (kind, squash) = match component {
                Component::GammaMod => (ModulationKind::Gamma, GammaSquash::None),
                Component::GammaModSigmoid => (ModulationKind::Gamma, GammaSquash::Sigmoid),
                _ => (ModulationKind::Beta, GammaSquash::None),
            };
            let y = input(&mut store, &mut rng, "y", &[2, 8, 2, 3])?;
            let h = input(&mut store, &mut rng, "h", &[2, 6])?;
            let slot = SaSlot::new(&mut Builder::new(&mut store, seed).scope("b"), 8, &slot_spec(kind, squash, 6))?;
            open_gates(&mut store, &mut rng);
            let r = random(&mut rng, &[2, 8, 2, 3], 1.0);
            let targets = store.weight_ids();
            gradcheck(&mut store, &targets, cfg, |g| {
                let (yv, hv) = (g.param(y), g.param(h));
                let (out, _) = slot.forward(g, yv, Some(hv), "b")?;
                probe(g, out, &r)
            })
        }
        Component::Block => {
            let x = input(&mut store, &mut rng, "x", &[3, 4, 4, 4])?;
            let spec = slot_spec(ModulationKind::None, GammaSquash::None, 1);
            let place = Placement { stage: 1, block: 1 };
            let block = ResidualBlock::new(&mut Builder::new(&mut store, seed).scope("blk"), place, 4, 8, 2, Some(&spec))?;
            open_gates(&mut store, &mut rng);
            let r = random(&mut rng, &[3, 8, 2, 2], 1.0);
            let targets = store.weight_ids();
            gradcheck(&mut store, &targets, cfg, |g| {
                let xv = g.param(x);
                let (out, _) = block.forward(g, xv, None)?;
                probe(g, out, &r)
            })
        }
        Component::Encoder => {
            let enc = QuestionEncoder::new(&mut Builder::new(&mut store, seed).scope("enc"), 9, 4, 5, CellKind::Gated)?;
            let tokens = questions(&mut rng, 3, 5, 9);
            let r = random(&mut rng, &[3, 5], 1.0);
            let targets = store.weight_ids();
            gradcheck(&mut store, &targets, cfg, |g| {
                let h = enc.forward(g, &tokens)?;
                probe(g, h, &r)
            })
        }
        Component::Modulated => {
            let y = input(&mut store, &mut rng, "y", &[2, 8, 2, 3])?;
            let mut b = Builder::new(&mut store, seed);
            let enc = QuestionEncoder::new(&mut b.scope("enc"), 9, 4, 6, CellKind::Gated)?;
            let slot = SaSlot::new(&mut b.scope("b"), 8, &slot_spec(ModulationKind::Beta, GammaSquash::None, 6))?;
            open_gates(&mut store, &mut rng);
            let tokens = questions(&mut rng, 2, 4, 9);
            let r = random(&mut rng, &[2, 8, 2, 3], 1.0);
            let targets = store.weight_ids();
            gradcheck(&mut store, &targets, cfg, |g| {
                let h = enc.forward(g, &tokens)?;
                let yv = g.param(y);
                let (out, _) = slot.forward(g, yv, Some(h), "b")?;
                probe(g, out, &r)
            })
        }
        Component::Model => {
            let mut config = ModelConfig::desk_default(9, answer_space());
            config.plan = check_plan();
            config.embed_dim = 6;
            config.hidden_dim = 8;
            config.attention_dim = 8;
            config.classifier_dim = 12;
            let mut model = VqaModel::new(config, seed)?;
            open_gates(&mut model.store, &mut rng);
            let images = random(&mut rng, &[2, 3, 32, 32], 1.0);
            let tokens = questions(&mut rng, 2, 4, 9);
            let r = random(&mut rng, &[2, answer_space().len()], 1.0);
            let targets = model.store.weight_ids();
            let mut store = std::mem::take(&mut model.store);
            gradcheck(&mut store, &targets, cfg, |g| {
                let out = model.forward(g, &images, &tokens)?;
                probe(g, out.logits, &r)
            })
        }
    }
}

/// Runs `component` for every seed and merges the reports.
pub fn gradcheck_seeds(component: Component, seeds: impl IntoIterator<Item = u64>) -> Result<GradCheckReport> {
    let mut merged: Option<GradCheckReport> = None;
    for s in seeds {
        let r = gradcheck_component(component, s)?;
        merged = Some(match merged {
            Some(m) => m.merge(r),
            None => r,
        });
    }
    merged.ok_or_else(|| config_err("no seeds given"))
}

pub const DUMP_TENSORS: &str = "attention.matn";
pub const DUMP_MANIFEST: &str = "attention.txt";

/// One dumped map.
#[derive(Clone, Debug, PartialEq)]
pub struct DumpEntry {
    pub sample: String,
    /// `S3:B1` for backbone layers, `head` for the answer-side pooling.
    pub layer: String,
    /// `weights` (`[N, N]`), `beta_h` or `alpha` (`[N]`).
    pub kind: String,
    pub locations: usize,
    /// Axis along which the entries sum to one.
    pub axis: usize,
}

/// Runs the model on `samples` with recording on and writes every
/// attention distribution to `dir`: tensors in order to one MATN file and a
/// manifest with one tab-separated line per tensor.
pub fn dump_attention(model: &VqaModel, data: &Dataset, samples: &[Sample], dir: &Path, header: &[String]) -> Result<Vec<DumpEntry>> {
    let refs: Vec<&Sample> = samples.iter().collect();
    let images = render_batch(&refs);
    let tokens = data.tokens(&refs);
    let mut g = Graph::new(&model.store, false, false);
    g.enable_recording();
    model.forward(&mut g, &images, &tokens)?;
    let mut seen: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    let mut entries = Vec::new();
    let mut tensors = Vec::new();
    for (name, t) in g.records() {
        let k = seen.entry(name.clone()).or_default();
        let sample = samples.get(*k).map_or_else(|| k.to_string(), |s| s.id.clone());
        *k += 1;
        let (layer, kind) = name.rsplit_once('.').unwrap_or((name.as_str(), ""));
        entries.push(DumpEntry {
            sample,
            layer: layer.to_string(),
            kind: kind.to_string(),
            locations: t.shape()[0],
            axis: 0,
        });
        tensors.push(t);
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    matn::save_all(dir.join(DUMP_TENSORS), &tensors)?;
    let mut text: String = header.iter().map(|h| format!("# {h}\n")).collect();
    text.push_str("# index\tsample\tlayer\tkind\tlocations\tsum_axis\n");
    for (i, e) in entries.iter().enumerate() {
        text.push_str(&format!("{i}\t{}\t{}\t{}\t{}\t{}\n", e.sample, e.layer, e.kind, e.locations, e.axis));
    }
    let path: PathBuf = dir.join(DUMP_MANIFEST);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for c in Component::ALL {
            assert_eq!(c.name().parse::<Component>().unwrap(), c);
        }
        assert!("conv".parse::<Component>().is_err());
    }
}
