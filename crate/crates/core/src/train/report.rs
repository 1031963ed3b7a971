//! Per-run reports as `key: value` blocks.

use std::fmt::Write as _;

use crate::data::Family;

/// Mean, minimum and maximum of a set of observations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        Some(Summary {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: values.len(),
        })
    }
}

/// Correct and total answers, overall and per family.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
    pub by_family: [(usize, usize); 4],
}

impl Tally {
    pub fn add(&mut self, family: Family, correct: bool) {
        self.total += 1;
        let slot = &mut self.by_family[family as usize];
        slot.1 += 1;
        if correct {
            self.correct += 1;
            slot.0 += 1;
        }
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.correct, self.total)
    }

    pub fn family_accuracy(&self, family: Family) -> Option<f64> {
        let (c, t) = self.by_family[family as usize];
        (t > 0).then(|| ratio(c, t))
    }

    /// Pooled accuracy over several families.
    pub fn pooled(&self, families: &[Family]) -> Option<f64> {
        let (c, t) = families
            .iter()
            .map(|f| self.by_family[*f as usize])
            .fold((0, 0), |(a, b), (c, t)| (a + c, b + t));
        (t > 0).then(|| ratio(c, t))
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Evaluation of one model state.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub tally: Tally,
    /// Shared attention gates, one value per layer.
    pub gamma: Option<Summary>,
    /// Question-conditioned gates over all evaluated examples and layers.
    pub gamma_h: Option<Summary>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval: EvalRecord,
    pub wall_secs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Completed,
    Diverged(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub config_hash: String,
    pub seed: u64,
    pub label: String,
    pub params_total: usize,
    pub params_sa: usize,
    pub params_modulation: usize,
    /// Share of the most common answer in the evaluation split.
    pub majority_rate: f64,
    /// Evaluation before the first update.
    pub init: Option<EvalRecord>,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    /// Loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
    pub status: RunStatus,
}

impl RunReport {
    pub fn best(&self) -> Option<&EpochRecord> {
        let e = self.best_epoch?;
        self.epochs.iter().find(|r| r.epoch == e)
    }

    /// Accuracy of the retained model: the best epoch, or the initial state.
    pub fn final_eval(&self) -> Option<&EvalRecord> {
        self.best().map(|r| &r.eval).or(self.init.as_ref())
    }

    pub fn gamma_h_series(&self) -> Vec<(usize, Summary)> {
        self.init
            .iter()
            .filter_map(|e| e.gamma_h.map(|s| (0, s)))
            .chain(self.epochs.iter().filter_map(|r| r.eval.gamma_h.map(|s| (r.epoch, s))))
            .collect()
    }

    /// The report text. Wall-clock fields are the only nondeterministic
    /// content and are omitted when `with_time` is false.
    pub fn to_text(&self, with_time: bool) -> String {
        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(w, "config_hash: {}", self.config_hash);
        let _ = writeln!(w, "seed: {}", self.seed);
        let _ = writeln!(w, "label: {}", self.label);
        let _ = writeln!(w, "params_total: {}", self.params_total);
        let _ = writeln!(w, "params_sa: {}", self.params_sa);
        let _ = writeln!(w, "params_modulation: {}", self.params_modulation);
        let _ = writeln!(w, "majority_rate: {}", self.majority_rate);
        let _ = writeln!(
            w,
            "status: {}",
            match &self.status {
                RunStatus::Completed => "completed".to_string(),
                RunStatus::Diverged(r) => format!("diverged ({r})"),
            }
        );
        let _ = writeln!(w, "best_epoch: {}", self.best_epoch.map_or("none".into(), |e| e.to_string()));
        if let Some(init) = &self.init {
            let _ = writeln!(w, "\n[epoch 0]");
            write_eval(w, init);
        }
        for r in &self.epochs {
            let _ = writeln!(w, "\n[epoch {}]", r.epoch);
            let _ = writeln!(w, "train_loss: {}", r.train_loss);
            write_eval(w, &r.eval);
            if with_time {
                let _ = writeln!(w, "wall_secs: {:.3}", r.wall_secs);
            }
        }
        s
    }

    /// One loss per line, printed in shortest round-trip form.
    /// One step loss per line after a two-line identifying header.
    pub fn loss_curve_text(&self) -> String {
        let mut w = format!("# config_hash={}\n# seed={}\n", self.config_hash, self.seed);
        for l in &self.step_losses {
            let _ = writeln!(w, "{l}");
        }
        w
    }
}

fn write_eval(w: &mut String, e: &EvalRecord) {
    let _ = writeln!(w, "eval_acc: {}", e.tally.accuracy());
    for f in Family::ALL {
        if let Some(a) = e.tally.family_accuracy(f) {
            let _ = writeln!(w, "eval_acc.{f}: {a}");
        }
    }
    for (name, s) in [("gamma", e.gamma), ("gamma_h", e.gamma_h)] {
        if let Some(s) = s {
            let _ = writeln!(w, "{name}_mean: {}", s.mean);
            let _ = writeln!(w, "{name}_min: {}", s.min);
            let _ = writeln!(w, "{name}_max: {}", s.max);
        }
    }
}
