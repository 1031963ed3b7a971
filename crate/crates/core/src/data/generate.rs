//! Seeded, answer-balanced sample generation.
//!
//! Every sample draws from its own stream keyed by `(seed, index)`, and the
//! evaluation split uses indices from [`EVAL_OFFSET`] upward, so the two
//! splits never share a scene stream. Within each family the target answer
//! cycles deterministically, which keeps answers balanced by construction.

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::question::{evaluate, Attribute, Axis, Descriptor, Family, Question, Relation, ANSWERS};
use crate::data::scene::{Color, Object, Scene, Shape, DEFAULT_GRID, MAX_OBJECTS, MIN_OBJECTS};
use crate::error::{Error, Result};
use crate::init::stream_seed;

pub const EVAL_OFFSET: u64 = 1 << 32;
const MAX_ATTEMPTS: usize = 10_000;
/// Upper bound on the share of the most common answer within a family.
pub const MAX_MAJORITY: f64 = 0.6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
        }
    }

    fn offset(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Eval => EVAL_OFFSET,
        }
    }
}

/// Relative weights of the four families, in [`Family::ALL`] order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FamilyMix(pub [f64; 4]);

impl Default for FamilyMix {
    fn default() -> Self {
        FamilyMix([1.0; 4])
    }
}

impl FamilyMix {
    pub fn only(family: Family) -> Self {
        let mut w = [0.0; 4];
        w[family as usize] = 1.0;
        FamilyMix(w)
    }

    /// `1,1,2,2` or `existence=1,comparison=2` (missing names weigh 0).
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("malformed family mix `{s}`"));
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let mut w = [0.0; 4];
        if parts.iter().all(|p| p.contains('=')) {
            for p in parts {
                let (name, v) = p.split_once('=').ok_or_else(bad)?;
                let f = Family::parse(name.trim()).map_err(|_| bad())?;
                w[f as usize] = v.trim().parse().map_err(|_| bad())?;
            }
        } else if parts.len() == 4 {
            for (slot, p) in w.iter_mut().zip(parts) {
                *slot = p.parse().map_err(|_| bad())?;
            }
        } else {
            return Err(bad());
        }
        FamilyMix(w).validate()?;
        Ok(FamilyMix(w))
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|w| !w.is_finite() || *w < 0.0) || self.0.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config(format!("family weights must be nonnegative and not all zero, got {:?}", self.0)));
        }
        Ok(())
    }

    /// Largest-remainder apportionment of `count` samples.
    pub fn quotas(&self, count: usize) -> [usize; 4] {
        let total: f64 = self.0.iter().sum();
        let exact: Vec<f64> = self.0.iter().map(|w| w / total * count as f64).collect();
        let mut q = [0usize; 4];
        for (slot, e) in q.iter_mut().zip(&exact) {
            *slot = e.floor() as usize;
        }
        let mut order: Vec<usize> = (0..4).filter(|&i| self.0[i] > 0.0).collect();
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
        let missing = count - q.iter().sum::<usize>();
        for &i in order.iter().cycle().take(missing) {
            q[i] += 1;
        }
        q
    }
}

impl std::fmt::Display for FamilyMix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = Family::ALL.iter().zip(self.0).map(|(fam, w)| format!("{fam}={w}")).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub question: Question,
    pub answer: &'static str,
    pub scene: Scene,
}

impl Sample {
    pub fn family(&self) -> Family {
        self.question.family()
    }

    pub fn label(&self) -> usize {
        ANSWERS.iter().position(|a| *a == self.answer).expect("answers come from the answer space")
    }
}

/// What a planned sample must ask and answer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Target {
    Exists(bool),
    QueryColor(Color),
    QueryShape(Shape),
    Count(usize),
    Relate(bool),
    MoreThan(bool),
    SameExtremes(bool),
}

impl Target {
    fn answer(self) -> &'static str {
        let yn = |b| if b { "yes" } else { "no" };
        match self {
            Target::Exists(b) | Target::Relate(b) | Target::MoreThan(b) | Target::SameExtremes(b) => yn(b),
            Target::QueryColor(c) => c.name(),
            Target::QueryShape(s) => s.name(),
            Target::Count(n) => ANSWERS[8 + n],
        }
    }
}

fn cycle(family: Family) -> Vec<Target> {
    match family {
        Family::Existence => vec![Target::Exists(true), Target::Exists(false)],
        Family::Attribute => Color::ALL
            .into_iter()
            .map(Target::QueryColor)
            .chain(Shape::ALL.into_iter().map(Target::QueryShape))
            .chain((0..4).map(Target::Count))
            .collect(),
        Family::SpatialRelation => vec![Target::Relate(true), Target::Relate(false)],
        Family::Comparison => vec![
            Target::MoreThan(true),
            Target::SameExtremes(false),
            Target::MoreThan(false),
            Target::SameExtremes(true),
        ],
    }
}

/// Share of the most frequent answer among the first `n` targets of a family.
fn planned_majority(family: Family, n: usize) -> f64 {
    let c = cycle(family);
    let mut counts = std::collections::HashMap::new();
    for t in c.iter().cycle().take(n) {
        *counts.entry(t.answer()).or_insert(0usize) += 1;
    }
    counts.values().copied().max().unwrap_or(0) as f64 / n.max(1) as f64
}

fn plan(seed: u64, count: usize, mix: &FamilyMix, split: Split) -> Result<Vec<(Family, Target)>> {
    if count == 0 {
        return Err(Error::Config("sample count must be positive".into()));
    }
    mix.validate()?;
    let quotas = mix.quotas(count);
    let mut out = Vec::with_capacity(count);
    for (family, &n) in Family::ALL.iter().zip(&quotas) {
        if n == 0 {
            continue;
        }
        let share = planned_majority(*family, n);
        if share > MAX_MAJORITY {
            return Err(Error::Config(format!(
                "{n} {family} samples cannot be answer-balanced (majority share {share:.2} > {MAX_MAJORITY}); request more samples"
            )));
        }
        out.extend(cycle(*family).into_iter().cycle().take(n).map(|t| (*family, t)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &format!("family-plan/{}", split.name())));
    out.shuffle(&mut rng);
    Ok(out)
}

fn random_scene(rng: &mut ChaCha8Rng) -> Scene {
    let k = rng.gen_range(MIN_OBJECTS..=MAX_OBJECTS);
    let cells = sample_indices(rng, DEFAULT_GRID * DEFAULT_GRID, k).into_vec();
    let objects = cells
        .into_iter()
        .map(|c| Object {
            row: c / DEFAULT_GRID,
            col: c % DEFAULT_GRID,
            color: *Color::ALL.choose(rng).expect("non-empty"),
            shape: *Shape::ALL.choose(rng).expect("non-empty"),
        })
        .collect();
    Scene::new(DEFAULT_GRID, objects).expect("distinct in-range cells")
}

/// Full description half the time, otherwise shape or color alone.
fn mask(rng: &mut ChaCha8Rng, color: Color, shape: Shape) -> Descriptor {
    match rng.gen_range(0..4) {
        0 | 1 => Descriptor { color: Some(color), shape: Some(shape) },
        2 => Descriptor { color: None, shape: Some(shape) },
        _ => Descriptor { color: Some(color), shape: None },
    }
}

fn random_descriptor(rng: &mut ChaCha8Rng) -> Descriptor {
    let c = *Color::ALL.choose(rng).expect("non-empty");
    let s = *Shape::ALL.choose(rng).expect("non-empty");
    mask(rng, c, s)
}

fn describe(rng: &mut ChaCha8Rng, o: &Object) -> Descriptor {
    mask(rng, o.color, o.shape)
}

fn propose(rng: &mut ChaCha8Rng, target: Target, scene: &Scene) -> Question {
    let objs = scene.objects();
    match target {
        Target::Exists(_) => {
            if rng.gen_bool(0.5) {
                let o = objs.choose(rng).expect("scenes are non-empty");
                Question::Exists(describe(rng, o))
            } else {
                Question::Exists(random_descriptor(rng))
            }
        }
        Target::QueryColor(_) => Question::QueryColor(*Shape::ALL.choose(rng).expect("non-empty")),
        Target::QueryShape(_) => Question::QueryShape(*Color::ALL.choose(rng).expect("non-empty")),
        Target::Count(_) => Question::Count(random_descriptor(rng)),
        Target::Relate(_) => {
            let pair = sample_indices(rng, objs.len(), 2).into_vec();
            let (a, b) = (describe(rng, &objs[pair[0]]), describe(rng, &objs[pair[1]]));
            Question::Relate(a, *Relation::ALL.choose(rng).expect("non-empty"), b)
        }
        Target::MoreThan(_) => loop {
            let (a, b) = (random_descriptor(rng), random_descriptor(rng));
            if a != b {
                break Question::MoreThan(a, b);
            }
        },
        Target::SameExtremes(_) => {
            let axis = if rng.gen_bool(0.5) { Axis::Horizontal } else { Axis::Vertical };
            let attr = if rng.gen_bool(0.5) { Attribute::Color } else { Attribute::Shape };
            Question::SameExtremes(axis, attr)
        }
    }
}

fn realize(seed: u64, index: u64, target: Target) -> Result<(Question, Scene)> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &format!("sample/{index}")));
    for _ in 0..MAX_ATTEMPTS {
        let scene = random_scene(&mut rng);
        let q = propose(&mut rng, target, &scene);
        if evaluate(&scene, &q).ok() == Some(target.answer()) {
            return Ok((q, scene));
        }
    }
    Err(Error::Data(format!("could not realize {target:?} for sample {index} in {MAX_ATTEMPTS} attempts")))
}

/// `count` samples of one split; the same arguments always give the same samples.
pub fn generate(seed: u64, count: usize, mix: &FamilyMix, split: Split) -> Result<Vec<Sample>> {
    plan(seed, count, mix, split)?
        .into_iter()
        .enumerate()
        .map(|(i, (_, target))| {
            let (question, scene) = realize(seed, split.offset() + i as u64, target)?;
            Ok(Sample { id: format!("{}-{i:06}", split.name()), question, answer: target.answer(), scene })
        })
        .collect()
}
