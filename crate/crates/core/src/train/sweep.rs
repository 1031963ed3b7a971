//! Placement sweep: one seeded run per (placement, seed) on shared data.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::config::Config;
use crate::data::{answer_space, Dataset, Family};
use crate::error::{Error, Result};
use crate::model::{ParamFilter, VqaModel};
use crate::plan::{table_label, Placement};
use crate::train::report::{RunReport, RunStatus};
use crate::train::trainer::{train, TrainSettings};

/// Families whose pooled accuracy forms the relational column.
pub const RELATIONAL: [Family; 2] = [Family::SpatialRelation, Family::Comparison];

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub label: String,
    pub placements: BTreeSet<Placement>,
    pub params_sa: usize,
    /// One entry per seed; failures carry their message.
    pub runs: Vec<(u64, std::result::Result<RunReport, String>)>,
}

impl SweepRow {
    fn mean_of(&self, f: impl Fn(&RunReport) -> Option<f64>) -> Option<f64> {
        let vals: Vec<f64> = self.runs.iter().filter_map(|(_, r)| r.as_ref().ok().and_then(&f)).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Seed mean of the retained model's eval accuracy.
    pub fn mean_accuracy(&self) -> Option<f64> {
        self.mean_of(|r| r.final_eval().map(|e| e.tally.accuracy()))
    }

    pub fn mean_pooled(&self, families: &[Family]) -> Option<f64> {
        self.mean_of(|r| r.final_eval().and_then(|e| e.tally.pooled(families)))
    }

    pub fn failed(&self) -> usize {
        self.runs.iter().filter(|(_, r)| r.is_err()).count()
    }
}

#[derive(Clone, Debug)]
pub struct SweepTable {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn row(&self, placements: &BTreeSet<Placement>) -> Option<&SweepRow> {
        self.rows.iter().find(|r| &r.placements == placements)
    }

    pub fn to_text(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("failed".to_string(), |a| format!("{:.2}", 100.0 * a));
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# config_hash={} seeds={}",
            self.config_hash,
            self.seeds.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
        );
        let _ = writeln!(s, "{:<34} {:>10} {:>10}  {:<24} {:>10}", "Model", "Eval set %", "Rel+Cmp %", "Per seed", "#param");
        for r in &self.rows {
            let per: Vec<String> = r
                .runs
                .iter()
                .map(|(_, x)| match x {
                    Ok(rep) => rep.final_eval().map_or("-".into(), |e| format!("{:.2}", 100.0 * e.tally.accuracy())),
                    Err(_) => "FAIL".into(),
                })
                .collect();
            let _ = writeln!(
                s,
                "{:<34} {:>10} {:>10}  {:<24} {:>10}",
                r.label,
                pct(r.mean_accuracy()),
                pct(r.mean_pooled(&RELATIONAL)),
                per.join(" "),
                r.params_sa
            );
        }
        s
    }
}

fn run_cell(base: &Config, placements: &BTreeSet<Placement>, seed: u64, data: &Dataset) -> Result<RunReport> {
    let mut cfg = base.clone();
    cfg.plan.placements = placements.clone();
    cfg.seed = seed;
    let mut model = VqaModel::new(cfg.model_config(data.vocab.size(), answer_space()), seed)?;
    let out = train(&mut model, data, &TrainSettings::from_config(&cfg), &cfg.hash())?;
    match &out.report.status {
        RunStatus::Completed => Ok(out.report),
        RunStatus::Diverged(r) => Err(Error::Diverged { epoch: out.report.epochs.len() + 1, reason: r.clone() }),
    }
}

/// Runs every placement (plus the SA-free baseline when asked) for every
/// seed of `base.seeds`, using `base.threads` worker threads.
///
/// The baseline row comes first; the others are sorted by mean accuracy,
/// best first, with fully failed rows last.
pub fn sweep(base: &Config, placements: &[BTreeSet<Placement>], include_baseline: bool, data: &Dataset) -> Result<SweepTable> {
    base.validate()?;
    let mut sets: Vec<BTreeSet<Placement>> = Vec::new();
    if include_baseline {
        sets.push(BTreeSet::new());
    }
    for p in placements {
        let mut plan = base.plan.clone();
        plan.placements = p.clone();
        plan.validate()?;
        if !sets.contains(p) {
            sets.push(p.clone());
        }
    }
    let cells: Vec<(usize, u64)> = (0..sets.len()).flat_map(|i| base.seeds.iter().map(move |&s| (i, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(base.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<std::result::Result<RunReport, String>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(i, seed)| run_cell(base, &sets[i], seed, data).map_err(|e| e.to_string()))
            .collect()
    });
    let mut rows: Vec<SweepRow> = sets
        .iter()
        .map(|p| {
            let mut cfg = base.clone();
            cfg.plan.placements = p.clone();
            let params_sa = VqaModel::new(cfg.model_config(data.vocab.size(), answer_space()), 0)
                .map(|m| m.count_parameters(ParamFilter::SaOnly))
                .unwrap_or(0);
            SweepRow { label: table_label(p), placements: p.clone(), params_sa, runs: Vec::new() }
        })
        .collect();
    for (&(i, seed), r) in cells.iter().zip(results) {
        rows[i].runs.push((seed, r));
    }
    let pinned = if include_baseline { 1 } else { 0 };
    rows[pinned..].sort_by(|a, b| {
        let key = |r: &SweepRow| r.mean_accuracy().unwrap_or(f64::NEG_INFINITY);
        key(b).total_cmp(&key(a))
    });
    Ok(SweepTable { config_hash: base.hash(), seeds: base.seeds.clone(), rows })
}
