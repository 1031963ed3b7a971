//! Named parameter storage and per-pass binding onto a fresh tape.

use std::collections::HashMap;
use std::ops::{Deref, DerefMut};

use crate::error::{Result, TensorError};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Learnable; receives gradients and optimizer updates.
    Weight,
    /// Tracked state such as batch-norm running statistics.
    Buffer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    pub kind: ParamKind,
    pub frozen: bool,
}

/// Parameters and buffers in construction order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, kind: ParamKind) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::Invalid(format!("duplicate parameter name `{name}`")));
        }
        let id = ParamId(self.entries.len());
        self.index.insert(name.clone(), id);
        self.entries.push(ParamEntry { name, value, kind, frozen: false });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn entries(&self) -> impl Iterator<Item = (ParamId, &ParamEntry)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e))
    }

    /// Ids of learnable weights (buffers excluded).
    pub fn weight_ids(&self) -> Vec<ParamId> {
        self.entries()
            .filter(|(_, e)| e.kind == ParamKind::Weight)
            .map(|(id, _)| id)
            .collect()
    }

    /// Total scalar count over learnable weights whose name satisfies `keep`.
    pub fn count_weights(&self, keep: impl Fn(&str) -> bool) -> usize {
        self.entries
            .iter()
            .filter(|e| e.kind == ParamKind::Weight && keep(&e.name))
            .map(|e| e.value.numel())
            .sum()
    }

    pub fn set_frozen(&mut self, id: ParamId, frozen: bool) {
        self.entries[id.0].frozen = frozen;
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        let e = &self.entries[id.0];
        e.kind == ParamKind::Weight && !e.frozen
    }

    /// Overwrites buffers with values produced during a pass.
    pub fn apply_updates(&mut self, updates: Vec<(ParamId, Tensor)>) {
        for (id, value) in updates {
            debug_assert_eq!(self.entries[id.0].value.shape(), value.shape());
            self.entries[id.0].value = value;
        }
    }
}

/// One forward (and optionally backward) pass over a [`ParamStore`].
///
/// Parameters are copied onto the tape lazily the first time a layer asks
/// for them, so each pass records only what it touches.
pub struct Graph<'s> {
    tape: Tape,
    store: &'s ParamStore,
    bound: Vec<Option<Var>>,
    training: bool,
    grads: bool,
    buffer_updates: Vec<(ParamId, Tensor)>,
    records: Option<Vec<(String, Tensor)>>,
}

impl<'s> Graph<'s> {
    /// `training` selects batch statistics in normalization layers; `grads`
    /// marks trainable parameters as requiring gradients.
    pub fn new(store: &'s ParamStore, training: bool, grads: bool) -> Self {
        Graph {
            tape: Tape::new(),
            store,
            bound: vec![None; store.len()],
            training,
            grads,
            buffer_updates: Vec::new(),
            records: None,
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let requires = self.grads && self.store.is_trainable(id);
        let v = self.tape.leaf(self.store.get(id).clone(), requires);
        self.bound[id.0] = Some(v);
        v
    }

    pub fn buffer(&self, id: ParamId) -> &'s Tensor {
        self.store.get(id)
    }

    pub fn update_buffer(&mut self, id: ParamId, value: Tensor) {
        self.buffer_updates.push((id, value));
    }

    pub fn take_buffer_updates(&mut self) -> Vec<(ParamId, Tensor)> {
        std::mem::take(&mut self.buffer_updates)
    }

    pub fn enable_recording(&mut self) {
        self.records.get_or_insert_with(Vec::new);
    }

    pub fn is_recording(&self) -> bool {
        self.records.is_some()
    }

    /// Stores a named copy of an intermediate value when recording is on.
    pub fn record(&mut self, name: impl Into<String>, value: &Tensor) {
        if let Some(r) = &mut self.records {
            r.push((name.into(), value.clone()));
        }
    }

    pub fn records(&self) -> &[(String, Tensor)] {
        self.records.as_deref().unwrap_or(&[])
    }

    /// Gradients of every bound, trainable parameter after `backward`.
    pub fn param_grads(&self) -> Vec<(ParamId, Tensor)> {
        self.bound
            .iter()
            .enumerate()
            .filter_map(|(i, v)| {
                let v = (*v)?;
                self.tape.grad(v).map(|g| (ParamId(i), g))
            })
            .collect()
    }

    pub fn param_grad(&self, id: ParamId) -> Option<Tensor> {
        self.bound[id.0].and_then(|v| self.tape.grad(v))
    }
}

impl Deref for Graph<'_> {
    type Target = Tape;

    fn deref(&self) -> &Tape {
        &self.tape
    }
}

impl DerefMut for Graph<'_> {
    fn deref_mut(&mut self) -> &mut Tape {
        &mut self.tape
    }
}
