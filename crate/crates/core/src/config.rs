//! Plain-text `key=value` run configuration.
//!
//! Blank lines and `#` comments are ignored; unknown keys are rejected.
//! The hash covers every resolved key except `seed`, `out_dir` and
//! `threads`, so a run is identified by the pair (hash, seed).

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::data::{answer_space, Dataset, FamilyMix};
use crate::encoder::CellKind;
use crate::error::{config_err, Error, Result};
use crate::model::{ModelConfig, VqaModel};
use crate::plan::{format_placements, parse_placements, NetworkPlan, StagePlan};
use crate::train::adamax::AdamaxConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub plan: NetworkPlan,
    pub embed_dim: usize,
    pub h_dim: usize,
    pub cell: CellKind,
    pub max_len: usize,
    pub attention_dim: usize,
    pub classifier_dim: usize,
    pub optimizer: AdamaxConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub freeze_backbone: bool,
    /// Weights loaded by name before training.
    pub init_checkpoint: Option<PathBuf>,
    /// Directory written by `gen-data`; when absent, data is generated in memory.
    pub data_dir: Option<PathBuf>,
    pub data_seed: u64,
    pub train_count: usize,
    pub eval_count: usize,
    pub family_mix: FamilyMix,
    /// Seeds of each sweep cell.
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub threads: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 1,
            plan: NetworkPlan::desk_default(),
            embed_dim: 32,
            h_dim: 64,
            cell: CellKind::Gated,
            max_len: 12,
            attention_dim: 64,
            classifier_dim: 128,
            optimizer: AdamaxConfig::default(),
            batch_size: 32,
            epochs: 20,
            freeze_backbone: false,
            init_checkpoint: None,
            data_dir: None,
            data_seed: 7,
            train_count: 10_000,
            eval_count: 2_000,
            family_mix: FamilyMix::default(),
            seeds: vec![1, 2, 3],
            out_dir: PathBuf::from("runs"),
            threads: 1,
        }
    }
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|x| x.trim().parse::<T>().map_err(|_| config_err(format!("{key}: cannot parse `{x}`"))))
        .collect()
}

fn one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse::<T>().map_err(|_| config_err(format!("{key}: cannot parse `{v}`")))
}

fn join<T: ToString>(v: impl IntoIterator<Item = T>) -> String {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn opt_path(v: &str) -> Option<PathBuf> {
    let v = v.trim();
    (!v.is_empty() && v != "none").then(|| PathBuf::from(v))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or("none".into(), |p| p.display().to_string())
}

impl Config {
    pub const KEYS: [&'static str; 32] = [
        "attention_dim",
        "batch_size",
        "beta1",
        "beta2",
        "c_bar_ratio",
        "cell",
        "classifier_dim",
        "data_dir",
        "data_seed",
        "embed_dim",
        "epochs",
        "eps",
        "eval_count",
        "family_mix",
        "freeze_backbone",
        "gamma_squash",
        "h_dim",
        "init_checkpoint",
        "lr",
        "max_len",
        "modulation",
        "out_dir",
        "proj_dim",
        "sa",
        "seed",
        "seeds",
        "stage_blocks",
        "stage_strides",
        "stage_widths",
        "stem_stride",
        "threads",
        "train_count",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = one(key, v)?,
            "stage_widths" | "stage_blocks" | "stage_strides" => {
                let vals: Vec<usize> = list(key, v)?;
                let stages = &mut self.plan.stages;
                if vals.len() != stages.len() {
                    stages.resize(vals.len(), StagePlan { blocks: 1, width: 1, stride: 1 });
                }
                for (s, x) in stages.iter_mut().zip(vals) {
                    match key {
                        "stage_widths" => s.width = x,
                        "stage_blocks" => s.blocks = x,
                        _ => s.stride = x,
                    }
                }
            }
            "stem_stride" => self.plan.stem_stride = one(key, v)?,
            "sa" => self.plan.placements = parse_placements(v)?,
            "modulation" => self.plan.modulation = v.parse()?,
            "gamma_squash" => self.plan.gamma_squash = v.parse()?,
            "c_bar_ratio" => self.plan.c_bar_ratio = one(key, v)?,
            "proj_dim" => self.plan.proj_dim = if v == "auto" { None } else { Some(one(key, v)?) },
            "embed_dim" => self.embed_dim = one(key, v)?,
            "h_dim" => self.h_dim = one(key, v)?,
            "cell" => self.cell = v.parse()?,
            "max_len" => self.max_len = one(key, v)?,
            "attention_dim" => self.attention_dim = one(key, v)?,
            "classifier_dim" => self.classifier_dim = one(key, v)?,
            "lr" => self.optimizer.lr = one(key, v)?,
            "beta1" => self.optimizer.beta1 = one(key, v)?,
            "beta2" => self.optimizer.beta2 = one(key, v)?,
            "eps" => self.optimizer.eps = one(key, v)?,
            "batch_size" => self.batch_size = one(key, v)?,
            "epochs" => self.epochs = one(key, v)?,
            "freeze_backbone" => self.freeze_backbone = one(key, v)?,
            "init_checkpoint" => self.init_checkpoint = opt_path(v),
            "data_dir" => self.data_dir = opt_path(v),
            "data_seed" => self.data_seed = one(key, v)?,
            "train_count" => self.train_count = one(key, v)?,
            "eval_count" => self.eval_count = one(key, v)?,
            "family_mix" => self.family_mix = FamilyMix::parse(v)?,
            "seeds" => self.seeds = list(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "threads" => self.threads = one(key, v)?,
            other => return Err(config_err(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected key=value, got `{line}`", n + 1)))?;
            self.set(k.trim(), v).map_err(|e| match e {
                Error::Config(m) => config_err(format!("line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Config::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Every key with its resolved value, sorted by key.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let p = &self.plan;
        let o = &self.optimizer;
        let mut e: Vec<(&'static str, String)> = vec![
            ("attention_dim", self.attention_dim.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("beta1", o.beta1.to_string()),
            ("beta2", o.beta2.to_string()),
            ("c_bar_ratio", p.c_bar_ratio.to_string()),
            ("cell", self.cell.to_string()),
            ("classifier_dim", self.classifier_dim.to_string()),
            ("data_dir", show_path(&self.data_dir)),
            ("data_seed", self.data_seed.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("epochs", self.epochs.to_string()),
            ("eps", o.eps.to_string()),
            ("eval_count", self.eval_count.to_string()),
            ("family_mix", self.family_mix.to_string()),
            ("freeze_backbone", self.freeze_backbone.to_string()),
            ("gamma_squash", p.gamma_squash.to_string()),
            ("h_dim", self.h_dim.to_string()),
            ("init_checkpoint", show_path(&self.init_checkpoint)),
            ("lr", o.lr.to_string()),
            ("max_len", self.max_len.to_string()),
            ("modulation", p.modulation.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("proj_dim", p.proj_dim.map_or("auto".into(), |d| d.to_string())),
            ("sa", format_placements(&p.placements)),
            ("seed", self.seed.to_string()),
            ("seeds", join(&self.seeds)),
            ("stage_blocks", join(p.stages.iter().map(|s| s.blocks))),
            ("stage_strides", join(p.stages.iter().map(|s| s.stride))),
            ("stage_widths", join(p.stages.iter().map(|s| s.width))),
            ("stem_stride", p.stem_stride.to_string()),
            ("threads", self.threads.to_string()),
            ("train_count", self.train_count.to_string()),
        ];
        e.sort_by_key(|(k, _)| *k);
        e
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// First 16 hex digits of the SHA-256 of the canonical text, excluding
    /// keys that do not affect results.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if !matches!(k, "seed" | "out_dir" | "threads") {
                h.update(format!("{k}={v}\n").as_bytes());
            }
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        self.family_mix.validate()?;
        let o = &self.optimizer;
        if !(o.lr > 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.eps >= 0.0) {
            return Err(config_err("optimizer needs lr > 0, beta1 and beta2 in [0, 1), eps >= 0"));
        }
        if self.batch_size == 0 || self.max_len == 0 || self.threads == 0 {
            return Err(config_err("batch_size, max_len and threads must be positive"));
        }
        if self.h_dim == 0 || self.embed_dim == 0 || self.attention_dim == 0 || self.classifier_dim == 0 {
            return Err(config_err("model dimensions must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(config_err("seeds must list at least one seed"));
        }
        if self.freeze_backbone && self.init_checkpoint.is_none() {
            return Err(config_err("freeze_backbone requires init_checkpoint"));
        }
        Ok(())
    }

    /// Loads `data_dir` when set, otherwise generates the splits in memory.
    pub fn dataset(&self) -> Result<Dataset> {
        match &self.data_dir {
            Some(dir) => Dataset::load(dir, self.max_len),
            None => Dataset::generate(self.data_seed, self.train_count, self.eval_count, &self.family_mix, self.max_len),
        }
    }

    /// A fresh model for `data`, warm-started from `init_checkpoint` (by
    /// name, missing entries keep their init) and frozen when requested.
    pub fn build_model(&self, data: &Dataset) -> Result<VqaModel> {
        self.validate()?;
        let mut model = VqaModel::new(self.model_config(data.vocab.size(), answer_space()), self.seed)?;
        if let Some(dir) = &self.init_checkpoint {
            crate::checkpoint::restore(&mut model.store, &crate::checkpoint::load(dir)?, false)?;
        }
        if self.freeze_backbone {
            model.freeze_backbone();
        }
        Ok(model)
    }

    /// Provenance lines embedded in every artifact.
    pub fn header(&self) -> Vec<String> {
        vec![format!("config_hash={}", self.hash()), format!("seed={}", self.seed)]
    }

    pub fn model_config(&self, vocab_size: usize, answers: Vec<String>) -> ModelConfig {
        ModelConfig {
            plan: self.plan.clone(),
            vocab_size,
            embed_dim: self.embed_dim,
            hidden_dim: self.h_dim,
            cell: self.cell,
            attention_dim: self.attention_dim,
            classifier_dim: self.classifier_dim,
            answers,
        }
    }
}
