//! Named, ordered collection of trainable tensors.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::{Elem, Tape, Tensor};

/// Insertion-ordered map of parameter name → tensor. The order is the
/// construction order of the model and is preserved through checkpoints,
/// so serialized artifacts are byte-stable.
#[derive(Clone, Default)]
pub struct ParamStore<T: Elem> {
    entries: Vec<(String, Tensor<T>)>,
    index: HashMap<String, usize>,
}

impl<T: Elem> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::invalid("param store", format!("duplicate parameter `{name}`")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i].1)
            .ok_or_else(|| Error::invalid("param store", format!("unknown parameter `{name}`")))
    }

    /// Replace the value of an existing parameter; shape must not change.
    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::invalid("param store", format!("unknown parameter `{name}`")))?;
        if self.entries[i].1.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "param set",
                lhs: self.entries[i].1.shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        self.entries[i].1 = value;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    /// Total number of scalar parameters.
    pub fn num_params(&self) -> u64 {
        self.entries.iter().map(|(_, t)| t.numel() as u64).sum()
    }

    /// A copy of the store whose tensors are registered as leaves on `tape`,
    /// in insertion order. Training traces parameters through this view.
    pub fn traced(&self, tape: &Tape<T>) -> ParamStore<T> {
        let mut out = ParamStore::new();
        for (name, t) in &self.entries {
            out.insert(name.clone(), tape.leaf(t)).expect("unique names");
        }
        out
    }

    pub fn cast<U: Elem>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for (name, t) in &self.entries {
            out.insert(name.clone(), t.cast::<U>()).expect("unique names");
        }
        out
    }
}
