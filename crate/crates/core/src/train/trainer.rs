//! Mini-batch training with per-epoch evaluation and best-state retention.

use std::time::Instant;

use lsa_tensor::{Graph, ParamStore};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::io::render_batch;
use crate::data::{majority_rate, Dataset, Sample};
use crate::error::{Error, Result};
use crate::init::stream_seed;
use crate::model::{argmax, ParamFilter, VqaModel};
use crate::plan::table_label;
use crate::train::adamax::{Adamax, AdamaxConfig};
use crate::train::report::{EpochRecord, EvalRecord, RunReport, RunStatus, Summary, Tally};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSettings {
    pub optimizer: AdamaxConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub eval_batch: usize,
}

impl TrainSettings {
    pub fn from_config(c: &crate::config::Config) -> Self {
        TrainSettings {
            optimizer: c.optimizer,
            batch_size: c.batch_size,
            epochs: c.epochs,
            seed: c.seed,
            eval_batch: 64,
        }
    }
}

pub struct TrainOutcome {
    pub report: RunReport,
    /// Parameters at the best evaluation (the initial ones if no epoch ran).
    pub best: ParamStore,
}

/// Accuracy and gate statistics of the model on `samples`.
pub fn evaluate(model: &VqaModel, data: &Dataset, samples: &[Sample], batch: usize) -> Result<EvalRecord> {
    let mut tally = Tally::default();
    let mut gates = Vec::new();
    let refs: Vec<&Sample> = samples.iter().collect();
    for chunk in refs.chunks(batch.max(1)) {
        let images = render_batch(chunk);
        let tokens = data.tokens(chunk);
        let mut g = Graph::new(&model.store, false, false);
        let out = model.forward(&mut g, &images, &tokens)?;
        let a = model.config.answers.len();
        for (s, row) in chunk.iter().zip(g.value(out.logits).data().chunks(a)) {
            tally.add(s.family(), argmax(row) == s.label());
        }
        for (_, v) in &out.gates {
            gates.extend_from_slice(g.value(*v).data());
        }
    }
    let shared: Vec<f64> = model
        .store
        .entries()
        .filter(|(_, e)| e.name.ends_with(".sa.gamma"))
        .map(|(_, e)| e.value.item())
        .collect();
    Ok(EvalRecord { tally, gamma: Summary::of(&shared), gamma_h: Summary::of(&gates) })
}

/// One optimizer step on `batch`; returns the batch loss.
pub fn train_step(model: &mut VqaModel, opt: &mut Adamax, data: &Dataset, batch: &[&Sample]) -> Result<f64> {
    let images = render_batch(batch);
    let tokens = data.tokens(batch);
    let labels: Vec<usize> = batch.iter().map(|s| s.label()).collect();
    let (loss, grads, updates) = {
        let mut g = Graph::new(&model.store, true, true);
        let out = model.forward(&mut g, &images, &tokens)?;
        let l = g.softmax_cross_entropy(out.logits, &labels)?;
        let loss = g.value(l).item();
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch: 0, reason: format!("loss is {loss}") });
        }
        g.backward(l)?;
        (loss, g.param_grads(), g.take_buffer_updates())
    };
    model.store.apply_updates(updates);
    opt.step(&mut model.store, &grads)?;
    Ok(loss)
}

/// Trains `model` in place. Divergence ends the run early with a partial
/// report whose status says why; other errors are returned.
pub fn train(model: &mut VqaModel, data: &Dataset, s: &TrainSettings, config_hash: &str) -> Result<TrainOutcome> {
    if s.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut report = RunReport {
        config_hash: config_hash.to_string(),
        seed: s.seed,
        label: table_label(&model.config.plan.placements),
        params_total: model.count_parameters(ParamFilter::All),
        params_sa: model.count_parameters(ParamFilter::SaOnly),
        params_modulation: model.count_parameters(ParamFilter::ModulationOnly),
        majority_rate: majority_rate(&data.eval),
        init: None,
        epochs: Vec::new(),
        best_epoch: None,
        step_losses: Vec::new(),
        status: RunStatus::Completed,
    };
    let mut best = model.store.clone();
    if s.epochs == 0 {
        return Ok(TrainOutcome { report, best });
    }
    report.init = Some(evaluate(model, data, &data.eval, s.eval_batch)?);
    let mut best_acc = f64::NEG_INFINITY;
    let mut opt = Adamax::new(s.optimizer);
    for epoch in 1..=s.epochs {
        let start = Instant::now();
        let mut order: Vec<&Sample> = data.train.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(s.seed, &format!("shuffle/{epoch}")));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(s.batch_size) {
            match train_step(model, &mut opt, data, batch) {
                Ok(l) => {
                    report.step_losses.push(l);
                    total += l * batch.len() as f64;
                }
                Err(Error::Diverged { reason, .. }) => {
                    report.status = RunStatus::Diverged(format!("epoch {epoch}: {reason}"));
                    return Ok(TrainOutcome { report, best });
                }
                Err(e) => return Err(e),
            }
        }
        let eval = evaluate(model, data, &data.eval, s.eval_batch)?;
        let acc = eval.tally.accuracy();
        if acc > best_acc {
            best_acc = acc;
            best = model.store.clone();
            report.best_epoch = Some(epoch);
        }
        report.epochs.push(EpochRecord {
            epoch,
            train_loss: total / data.train.len().max(1) as f64,
            eval,
            wall_secs: start.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainOutcome { report, best })
}
