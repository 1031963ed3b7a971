//! Central-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::TensorError;
use crate::params::{Graph, ParamId, ParamStore};
use crate::tape::Var;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Central-difference half step.
    pub step: f64,
    /// Upper bound on sampled coordinates across all targets.
    pub max_coords: usize,
    pub tolerance: f64,
    /// Denominator floor of the relative error, so that coordinates whose
    /// true gradient is ~0 are judged on absolute error instead.
    pub floor: f64,
    /// Normalization layers use batch statistics during the check.
    pub training: bool,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            max_coords: 200,
            tolerance: 1e-4,
            floor: 1e-5,
            training: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoordCheck {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub coords: usize,
    /// Coordinates whose perturbed passes crossed a rectifier kink, where
    /// central differences do not estimate the derivative.
    pub skipped: usize,
    pub max_rel_error: f64,
    pub worst: Option<CoordCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.coords > 0 && self.max_rel_error < self.tolerance
    }

    /// Combines reports of several runs, keeping the worst coordinate.
    pub fn merge(mut self, other: GradCheckReport) -> GradCheckReport {
        self.coords += other.coords;
        self.skipped += other.skipped;
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
        self
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares autodiff gradients of `loss` with central differences on up to
/// `cfg.max_coords` randomly chosen coordinates of `targets`.
///
/// `loss` must be a deterministic function of the store. The store is
/// restored to its original values before returning.
pub fn gradcheck<E, F>(
    store: &mut ParamStore,
    targets: &[ParamId],
    cfg: &GradCheckConfig,
    mut loss: F,
) -> Result<GradCheckReport, E>
where
    E: From<TensorError>,
    F: FnMut(&mut Graph<'_>) -> Result<Var, E>,
{
    let analytic: Vec<Vec<f64>> = {
        let mut g = Graph::new(store, cfg.training, true);
        let l = loss(&mut g)?;
        g.backward(l)?;
        targets
            .iter()
            .map(|&id| match g.param_grad(id) {
                Some(t) => t.into_data(),
                None => vec![0.0; store.get(id).numel()],
            })
            .collect()
    };

    let coords: Vec<(usize, usize)> = targets
        .iter()
        .enumerate()
        .flat_map(|(t, &id)| (0..store.get(id).numel()).map(move |i| (t, i)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let chosen: Vec<(usize, usize)> = if coords.len() <= cfg.max_coords {
        coords
    } else {
        let mut idx = sample(&mut rng, coords.len(), cfg.max_coords).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|k| coords[k]).collect()
    };

    let mut eval = |store: &ParamStore| -> Result<(f64, u64), E> {
        let mut g = Graph::new(store, cfg.training, false);
        let l = loss(&mut g)?;
        Ok((g.value(l).item(), g.activation_pattern()))
    };
    let (_, pattern) = eval(store)?;

    let mut report = GradCheckReport {
        coords: 0,
        skipped: 0,
        max_rel_error: 0.0,
        worst: None,
        tolerance: cfg.tolerance,
    };
    for (t, i) in chosen {
        let id = targets[t];
        let original = store.get(id).data()[i];
        store.get_mut(id).data_mut()[i] = original + cfg.step;
        let plus = eval(store);
        store.get_mut(id).data_mut()[i] = original - cfg.step;
        let minus = eval(store);
        store.get_mut(id).data_mut()[i] = original;
        let ((plus, p_pat), (minus, m_pat)) = (plus?, minus?);
        if p_pat != pattern || m_pat != pattern {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * cfg.step);
        let a = analytic[t][i];
        let rel = relative_error(a, numeric, cfg.floor);
        report.coords += 1;
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst = Some(CoordCheck {
                param: store.name(id).to_string(),
                index: i,
                analytic: a,
                numeric,
                rel_error: rel,
            });
        }
    }
    Ok(report)
}
