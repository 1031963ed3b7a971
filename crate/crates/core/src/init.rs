//! Seeded, name-keyed parameter initialization.
//!
//! Each tensor draws from its own stream keyed by `(seed, name)`, so adding
//! or removing a layer never shifts the initial values of any other layer.

use lsa_tensor::{ParamId, ParamKind, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
    HeUniform { fan_in: usize },
    /// `U(-sqrt(6 / (fan_in + fan_out)), ...)`.
    XavierUniform { fan_in: usize, fan_out: usize },
    Uniform(f64),
}

pub fn stream_seed(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn materialize(seed: u64, name: &str, shape: &[usize], init: Init) -> Tensor {
    let bound = match init {
        Init::Zeros => return Tensor::zeros(shape),
        Init::Ones => return Tensor::ones(shape),
        Init::HeUniform { fan_in } => (6.0 / fan_in as f64).sqrt(),
        Init::XavierUniform { fan_in, fan_out } => (6.0 / (fan_in + fan_out) as f64).sqrt(),
        Init::Uniform(b) => b,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, name));
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("positive extents")
}

/// Allocates named parameters into a store under a dotted prefix.
pub struct Builder<'a> {
    store: &'a mut ParamStore,
    seed: u64,
    prefix: String,
}

impl<'a> Builder<'a> {
    pub fn new(store: &'a mut ParamStore, seed: u64) -> Self {
        Builder { store, seed, prefix: String::new() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A builder writing into the same store under `prefix.scope`.
    pub fn scope(&mut self, scope: &str) -> Builder<'_> {
        let prefix = if self.prefix.is_empty() { scope.to_string() } else { format!("{}.{scope}", self.prefix) };
        Builder { store: self.store, seed: self.seed, prefix }
    }

    fn full_name(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    pub fn weight(&mut self, name: &str, shape: &[usize], init: Init) -> Result<ParamId> {
        let full = self.full_name(name);
        let t = materialize(self.seed, &full, shape, init);
        Ok(self.store.insert(full, t, ParamKind::Weight)?)
    }

    pub fn buffer(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        let full = self.full_name(name);
        Ok(self.store.insert(full, value, ParamKind::Buffer)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_depend_on_name_not_order() {
        let mut a = ParamStore::new();
        let mut b = ParamStore::new();
        let ida = {
            let mut bl = Builder::new(&mut a, 5);
            bl.weight("x", &[3], Init::Uniform(1.0)).unwrap();
            bl.weight("y", &[4], Init::Uniform(1.0)).unwrap()
        };
        let idb = Builder::new(&mut b, 5).weight("y", &[4], Init::Uniform(1.0)).unwrap();
        assert_eq!(a.get(ida), b.get(idb));
    }

    #[test]
    fn he_uniform_respects_bound() {
        let mut s = ParamStore::new();
        let id = Builder::new(&mut s, 1).weight("w", &[64, 9], Init::HeUniform { fan_in: 9 }).unwrap();
        let bound = (6.0f64 / 9.0).sqrt();
        assert!(s.get(id).data().iter().all(|v| v.abs() <= bound));
    }
}
