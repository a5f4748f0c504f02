use indexmap::IndexMap;

use super::Tensor;
use crate::error::{DsganError, Result};

/// A trainable tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

/// Named parameters in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    entries: IndexMap<String, Param>,
}

/// Values-only copy of a [`ParamSet`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSnapshot {
    pub(crate) entries: IndexMap<String, Tensor>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
}

impl SgdConfig {
    pub fn new(learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(DsganError::Config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        Ok(SgdConfig { learning_rate })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `value -= lr * grad`
    Descent,
    /// `value += lr * grad`
    Ascent,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<usize> {
        if self.entries.contains_key(name) {
            return Err(DsganError::ParamMismatch(format!("duplicate parameter {name}")));
        }
        let grad = Tensor::zeros(value.shape());
        let (idx, _) = self.entries.insert_full(name.to_string(), Param { value, grad });
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.get_index_of(name)
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.entries.get_mut(name)
    }

    pub fn at(&self, idx: usize) -> &Param {
        &self.entries[idx]
    }

    pub fn at_mut(&mut self, idx: usize) -> &mut Param {
        &mut self.entries[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Splits every entry into a shared value and an exclusive gradient, so a
    /// backward pass can read all weights while writing all gradients.
    pub fn split_grads(&mut self) -> Vec<(&Tensor, &mut Tensor)> {
        self.entries
            .values_mut()
            .map(|p| (&p.value, &mut p.grad))
            .collect()
    }

    /// Total number of scalar coordinates.
    pub fn num_coords(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.entries.values_mut() {
            p.grad.fill(0.0);
        }
    }

    /// Applies one plain SGD step and clears every gradient buffer.
    ///
    /// Nothing is written if any gradient is non-finite.
    pub fn sgd_apply(&mut self, cfg: SgdConfig, direction: Direction) -> Result<()> {
        if let Some((name, _)) = self.entries.iter().find(|(_, p)| !p.grad.all_finite()) {
            return Err(DsganError::NonFinite(format!("gradient of {name}")));
        }
        let step = match direction {
            Direction::Descent => -cfg.learning_rate,
            Direction::Ascent => cfg.learning_rate,
        };
        for p in self.entries.values_mut() {
            for (v, g) in p.value.data_mut().iter_mut().zip(p.grad.data_mut()) {
                if *g != 0.0 {
                    *v += step * *g;
                    *g = 0.0;
                }
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> ParamSnapshot {
        ParamSnapshot {
            entries: self
                .entries
                .iter()
                .map(|(k, p)| (k.clone(), p.value.clone()))
                .collect(),
        }
    }

    /// Overwrites values from `snap` and clears gradients. Names and shapes
    /// must match exactly.
    pub fn restore(&mut self, snap: &ParamSnapshot) -> Result<()> {
        if snap.entries.len() != self.entries.len() {
            return Err(DsganError::ParamMismatch(format!(
                "snapshot has {} entries, model has {}",
                snap.entries.len(),
                self.entries.len()
            )));
        }
        for (name, p) in &self.entries {
            let v = snap
                .entries
                .get(name)
                .ok_or_else(|| DsganError::ParamMismatch(format!("snapshot lacks {name}")))?;
            if v.shape() != p.value.shape() {
                return Err(DsganError::ParamMismatch(format!(
                    "{name}: snapshot shape {:?} vs model {:?}",
                    v.shape(),
                    p.value.shape()
                )));
            }
        }
        for (name, p) in self.entries.iter_mut() {
            p.value.clone_from(&snap.entries[name.as_str()]);
            p.grad.fill(0.0);
        }
        Ok(())
    }
}

impl ParamSnapshot {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        self.entries.insert(name.to_string(), value);
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.entries.shift_remove(name)
    }
}
