//! Adam with an infinity-norm second moment.

use std::collections::HashMap;

use lsa_tensor::{ParamId, ParamStore, Tensor};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamaxConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamaxConfig {
    fn default() -> Self {
        AdamaxConfig { lr: 2e-2, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, Default)]
struct Moments {
    m: Vec<f64>,
    u: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Adamax {
    pub config: AdamaxConfig,
    t: u64,
    state: HashMap<ParamId, Moments>,
}

impl Adamax {
    pub fn new(config: AdamaxConfig) -> Self {
        Adamax { config, t: 0, state: HashMap::new() }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update of every trainable parameter listed in `grads`.
    ///
    /// All gradients are checked before any parameter moves, so a
    /// non-finite gradient leaves the store untouched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, Tensor)]) -> Result<()> {
        for (id, g) in grads {
            if g.shape() != store.get(*id).shape() {
                return Err(Error::Config(format!(
                    "gradient {:?} does not match parameter `{}` {:?}",
                    g.shape(),
                    store.name(*id),
                    store.get(*id).shape()
                )));
            }
            if !g.is_finite() {
                return Err(Error::Diverged {
                    epoch: 0,
                    reason: format!("non-finite gradient in `{}`", store.name(*id)),
                });
            }
        }
        self.t += 1;
        let AdamaxConfig { lr, beta1, beta2, eps } = self.config;
        let step = lr / (1.0 - beta1.powi(self.t.min(i32::MAX as u64) as i32));
        for (id, g) in grads {
            if !store.is_trainable(*id) {
                continue;
            }
            let n = g.numel();
            let st = self.state.entry(*id).or_insert_with(|| Moments { m: vec![0.0; n], u: vec![0.0; n] });
            let theta = store.get_mut(*id).data_mut();
            for i in 0..n {
                let gi = g.data()[i];
                st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * gi;
                st.u[i] = (beta2 * st.u[i]).max(gi.abs());
                theta[i] -= step * st.m[i] / (st.u[i] + eps);
            }
        }
        Ok(())
    }
}
