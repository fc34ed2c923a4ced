//! Named parameter storage shared by layers, the optimizer and checkpoints.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{numel, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    value: Option<Tensor>,
}

/// Parameters of one model.
///
/// A store is either materialized (every parameter drawn uniformly in
/// `±sqrt(1/fan_in)` from a seeded generator) or shape-only, which is what
/// cost accounting uses for the multi-million-parameter reference models.
#[derive(Clone, Debug)]
pub struct ParamStore {
    uid: u64,
    entries: Vec<Entry>,
    rng: Option<ChaCha8Rng>,
}

static NEXT_STORE: AtomicU64 = AtomicU64::new(1);

fn next_uid() -> u64 {
    NEXT_STORE.fetch_add(1, Ordering::Relaxed)
}

impl ParamStore {
    pub fn seeded(seed: u64) -> Self {
        ParamStore {
            uid: next_uid(),
            entries: Vec::new(),
            rng: Some(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn shape_only() -> Self {
        ParamStore {
            uid: next_uid(),
            entries: Vec::new(),
            rng: None,
        }
    }

    /// Process-unique identity, used by graphs to keep stores apart.
    pub(crate) fn uid(&self) -> u64 {
        self.uid
    }

    pub fn is_materialized(&self) -> bool {
        self.rng.is_some()
    }

    /// Registers a parameter initialized uniformly in `[-bound, bound)`.
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], bound: f64) -> ParamId {
        let value = self.rng.as_mut().map(|rng| Tensor::uniform(shape, bound, rng));
        self.entries.push(Entry {
            name: name.into(),
            shape: shape.to_vec(),
            value,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn shape(&self, id: ParamId) -> &[usize] {
        &self.entries[id.0].shape
    }

    /// Number of real scalars across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| numel(&e.shape)).sum()
    }

    pub fn get(&self, id: ParamId) -> Result<&Tensor> {
        let e = self
            .entries
            .get(id.0)
            .ok_or_else(|| Error::Graph(format!("unknown parameter {}", id.0)))?;
        e.value
            .as_ref()
            .ok_or_else(|| Error::Graph(format!("parameter `{}` is not materialized", e.name)))
    }

    pub fn get_mut(&mut self, id: ParamId) -> Result<&mut Tensor> {
        let e = self
            .entries
            .get_mut(id.0)
            .ok_or_else(|| Error::Graph(format!("unknown parameter {}", id.0)))?;
        let name = &e.name;
        e.value
            .as_mut()
            .ok_or_else(|| Error::Graph(format!("parameter `{name}` is not materialized")))
    }

    /// Replaces a parameter value, keeping its shape.
    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let e = &mut self.entries[id.0];
        if e.shape != value.shape() {
            return Err(crate::error::shape_err("param set", &e.shape, value.shape()));
        }
        e.value = Some(value);
        Ok(())
    }

    /// Snapshot of all values as `(name, shape, data)` records.
    pub fn export(&self) -> Result<Vec<ParamRecord>> {
        self.ids()
            .map(|id| {
                Ok(ParamRecord {
                    name: self.name(id).to_string(),
                    shape: self.shape(id).to_vec(),
                    data: self.get(id)?.data().to_vec(),
                })
            })
            .collect()
    }

    /// Loads records produced by [`ParamStore::export`] on an identically built store.
    pub fn import(&mut self, records: &[ParamRecord]) -> Result<()> {
        if records.len() != self.entries.len() {
            return Err(Error::Config(format!(
                "checkpoint holds {} parameters, model has {}",
                records.len(),
                self.entries.len()
            )));
        }
        for (i, r) in records.iter().enumerate() {
            let e = &self.entries[i];
            if e.name != r.name || e.shape != r.shape {
                return Err(Error::Config(format!(
                    "checkpoint parameter `{}` {:?} does not match `{}` {:?}",
                    r.name, r.shape, e.name, e.shape
                )));
            }
            let t = Tensor::new(&r.shape, r.data.clone())?;
            self.entries[i].value = Some(t);
        }
        if self.rng.is_none() {
            self.rng = Some(ChaCha8Rng::seed_from_u64(0));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}
