//! Declarative backbone layout and self-attention placements.
//!
//! Stages and blocks are numbered from 1, so `S3:B2` is the second block
//! of the third stage.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{config_err, Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StagePlan {
    pub blocks: usize,
    pub width: usize,
    /// Stride of the first block in the stage.
    pub stride: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Placement {
    pub stage: usize,
    pub block: usize,
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}:B{}", self.stage, self.block)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ModulationKind {
    #[default]
    None,
    Gamma,
    Beta,
}

impl FromStr for ModulationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ModulationKind::None),
            "gamma" => Ok(ModulationKind::Gamma),
            "beta" => Ok(ModulationKind::Beta),
            other => Err(config_err(format!("unknown modulation `{other}` (none|gamma|beta)"))),
        }
    }
}

impl fmt::Display for ModulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModulationKind::None => "none",
            ModulationKind::Gamma => "gamma",
            ModulationKind::Beta => "beta",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GammaSquash {
    #[default]
    None,
    Sigmoid,
}

impl FromStr for GammaSquash {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(GammaSquash::None),
            "sigmoid" => Ok(GammaSquash::Sigmoid),
            other => Err(config_err(format!("unknown gamma squash `{other}` (none|sigmoid)"))),
        }
    }
}

impl fmt::Display for GammaSquash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GammaSquash::None => "none",
            GammaSquash::Sigmoid => "sigmoid",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkPlan {
    pub input_channels: usize,
    pub input_size: usize,
    pub stem_stride: usize,
    pub stages: Vec<StagePlan>,
    pub placements: BTreeSet<Placement>,
    pub modulation: ModulationKind,
    pub gamma_squash: GammaSquash,
    /// `C̄ = C / c_bar_ratio` for every attention layer.
    pub c_bar_ratio: usize,
    /// Projection width of the β modulator; `None` uses the layer's `C`.
    pub proj_dim: Option<usize>,
}

impl NetworkPlan {
    /// Three stages of widths 16/32/64 with 2/2/3 basic blocks on 32×32 RGB.
    pub fn desk_default() -> Self {
        NetworkPlan {
            input_channels: 3,
            input_size: 32,
            stem_stride: 1,
            stages: vec![
                StagePlan { blocks: 2, width: 16, stride: 1 },
                StagePlan { blocks: 2, width: 32, stride: 2 },
                StagePlan { blocks: 3, width: 64, stride: 2 },
            ],
            placements: BTreeSet::new(),
            modulation: ModulationKind::None,
            gamma_squash: GammaSquash::None,
            c_bar_ratio: 8,
            proj_dim: None,
        }
    }

    pub fn with_placements(mut self, placements: BTreeSet<Placement>) -> Self {
        self.placements = placements;
        self
    }

    pub fn with_modulation(mut self, kind: ModulationKind) -> Self {
        self.modulation = kind;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(config_err("plan has no stages"));
        }
        if self.input_channels == 0 || self.input_size == 0 || self.stem_stride == 0 {
            return Err(config_err("input channels, input size and stem stride must be positive"));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.blocks == 0 {
                return Err(config_err(format!("stage {} has zero blocks", i + 1)));
            }
            if s.width == 0 || s.stride == 0 {
                return Err(config_err(format!("stage {} needs positive width and stride", i + 1)));
            }
        }
        if self.stages.windows(2).any(|w| w[1].width < w[0].width) {
            return Err(config_err("stage widths must be non-decreasing"));
        }
        if self.c_bar_ratio == 0 {
            return Err(config_err("c_bar_ratio must be positive"));
        }
        if self.proj_dim == Some(0) {
            return Err(config_err("proj_dim must be positive"));
        }
        for p in &self.placements {
            let ok = p.stage >= 1
                && p.stage <= self.stages.len()
                && p.block >= 1
                && p.block <= self.stages[p.stage - 1].blocks;
            if !ok {
                return Err(config_err(format!("placement {p} does not name an existing block")));
            }
            if self.c_bar(self.stages[p.stage - 1].width) == 0 {
                return Err(config_err(format!(
                    "placement {p}: width {} is smaller than c_bar_ratio {}",
                    self.stages[p.stage - 1].width,
                    self.c_bar_ratio
                )));
            }
        }
        let mut size = self.input_size;
        for stride in std::iter::once(self.stem_stride).chain(self.stages.iter().map(|s| s.stride)) {
            size = lsa_tensor::conv_extent(size, 3, stride, 1)
                .ok_or_else(|| config_err("stride schedule shrinks the feature map to nothing"))?;
        }
        Ok(())
    }

    pub fn c_bar(&self, channels: usize) -> usize {
        channels / self.c_bar_ratio
    }

    /// Spatial extent after each stage (square maps).
    pub fn stage_sizes(&self) -> Vec<usize> {
        let mut size = lsa_tensor::conv_extent(self.input_size, 3, self.stem_stride, 1).unwrap_or(0);
        self.stages
            .iter()
            .map(|s| {
                size = lsa_tensor::conv_extent(size, 3, s.stride, 1).unwrap_or(0);
                size
            })
            .collect()
    }

    /// `(C, H, W)` of the last stage's output.
    pub fn feature_shape(&self) -> (usize, usize, usize) {
        let size = *self.stage_sizes().last().expect("validated plan has stages");
        (self.stages.last().expect("stages").width, size, size)
    }

    /// Closed-form parameter count of the backbone without attention layers.
    pub fn analytic_backbone_params(&self) -> usize {
        let w1 = self.stages[0].width;
        let mut total = self.input_channels * w1 * 9 + 2 * w1;
        let mut in_ch = w1;
        for s in &self.stages {
            for b in 0..s.blocks {
                let stride = if b == 0 { s.stride } else { 1 };
                let out = s.width;
                total += in_ch * out * 9 + out * out * 9 + 4 * out;
                if in_ch != out || stride != 1 {
                    total += in_ch * out;
                }
                in_ch = out;
            }
        }
        total
    }

    pub fn geometry(&self) -> ArchGeometry {
        ArchGeometry {
            name: "plan".to_string(),
            stage_blocks: self.stages.iter().map(|s| s.blocks).collect(),
            sa_channels: self.stages.iter().map(|s| s.width).collect(),
        }
    }
}

/// Stage layout of a named architecture, for counting attention and
/// modulation parameters without allocating a network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArchGeometry {
    pub name: String,
    pub stage_blocks: Vec<usize>,
    /// Channel count at the attention insertion point of each stage.
    pub sa_channels: Vec<usize>,
}

impl ArchGeometry {
    pub fn resnet34() -> Self {
        ArchGeometry {
            name: "resnet34".into(),
            stage_blocks: vec![3, 4, 6, 3],
            sa_channels: vec![64, 128, 256, 512],
        }
    }

    /// Bottleneck stages; attention sits after the expanding 1×1 convolution.
    pub fn resnet152() -> Self {
        ArchGeometry {
            name: "resnet152".into(),
            stage_blocks: vec![3, 8, 36, 3],
            sa_channels: vec![256, 512, 1024, 2048],
        }
    }

    pub fn named(name: &str) -> Result<Self> {
        match name {
            "resnet34" => Ok(Self::resnet34()),
            "resnet152" => Ok(Self::resnet152()),
            "desk" => Ok(NetworkPlan::desk_default().geometry()),
            other => Err(config_err(format!("unknown architecture `{other}` (resnet34|resnet152|desk)"))),
        }
    }

    pub fn validate(&self, placements: &BTreeSet<Placement>) -> Result<()> {
        for p in placements {
            let ok = p.stage >= 1
                && p.stage <= self.stage_blocks.len()
                && p.block >= 1
                && p.block <= self.stage_blocks[p.stage - 1];
            if !ok {
                return Err(config_err(format!("placement {p} does not exist in {}", self.name)));
            }
        }
        Ok(())
    }

    pub fn channels_at(&self, p: Placement) -> usize {
        self.sa_channels[p.stage - 1]
    }

    /// Attention projection weights of `placements`, with `C̄ = C / ratio`.
    pub fn sa_params(&self, placements: &BTreeSet<Placement>, c_bar_ratio: usize) -> Result<usize> {
        self.validate(placements)?;
        if c_bar_ratio == 0 {
            return Err(config_err("c_bar_ratio must be positive"));
        }
        Ok(placements
            .iter()
            .map(|&p| {
                let c = self.channels_at(p);
                crate::attention::sa_parameter_count(c, c / c_bar_ratio)
            })
            .sum())
    }

    /// Modulator weights of `placements`; `proj_dim` defaults to `C`.
    pub fn modulation_params(
        &self,
        placements: &BTreeSet<Placement>,
        kind: ModulationKind,
        h_dim: usize,
        proj_dim: Option<usize>,
    ) -> Result<usize> {
        self.validate(placements)?;
        placements.iter().try_fold(0, |acc, &p| {
            let c = self.channels_at(p);
            Ok(acc + crate::modulation::modulation_parameter_count(kind, c, h_dim, proj_dim.unwrap_or(c))?)
        })
    }
}

/// Parses `S3:B1,3,5`, `S1,2,3:B1` or several groups joined by `;`.
/// An empty string or `none` is the empty set.
pub fn parse_placements(s: &str) -> Result<BTreeSet<Placement>> {
    let s = s.trim();
    let mut out = BTreeSet::new();
    if s.is_empty() || s.eq_ignore_ascii_case("none") {
        return Ok(out);
    }
    let bad = || config_err(format!("malformed placement `{s}` (expected e.g. S3:B1,3,5)"));
    for group in s.split(';').map(str::trim).filter(|g| !g.is_empty()) {
        let (stages, blocks) = group.split_once(':').ok_or_else(bad)?;
        let stages = stages.trim().strip_prefix(['S', 's']).ok_or_else(bad)?;
        let blocks = blocks.trim().strip_prefix(['B', 'b']).ok_or_else(bad)?;
        let list = |l: &str| -> Result<Vec<usize>> {
            l.split(',').map(|x| x.trim().parse::<usize>().map_err(|_| bad())).collect()
        };
        for &stage in &list(stages)? {
            for &block in &list(blocks)? {
                if stage == 0 || block == 0 {
                    return Err(config_err(format!("placement S{stage}:B{block}: indices start at 1")));
                }
                out.insert(Placement { stage, block });
            }
        }
    }
    Ok(out)
}

/// Stages sharing the same block list, in stage order.
fn groups(placements: &BTreeSet<Placement>) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut by_stage: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for p in placements {
        by_stage.entry(p.stage).or_default().push(p.block);
    }
    let mut out: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for (stage, blocks) in by_stage {
        match out.iter_mut().find(|(_, b)| *b == blocks) {
            Some((stages, _)) => stages.push(stage),
            None => out.push((vec![stage], blocks)),
        }
    }
    out
}

fn join(v: &[usize]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Canonical textual form accepted by [`parse_placements`].
pub fn format_placements(placements: &BTreeSet<Placement>) -> String {
    if placements.is_empty() {
        return "none".into();
    }
    groups(placements)
        .iter()
        .map(|(s, b)| format!("S{}:B{}", join(s), join(b)))
        .collect::<Vec<_>>()
        .join(";")
}

/// Row label in the style `SA (S: 3 - B: 1,3,5)`.
pub fn table_label(placements: &BTreeSet<Placement>) -> String {
    if placements.is_empty() {
        return "Baseline (No SA)".into();
    }
    let inner = groups(placements)
        .iter()
        .map(|(s, b)| format!("S: {} - B: {}", join(s), join(b)))
        .collect::<Vec<_>>()
        .join("; ");
    format!("SA ({inner})")
}
