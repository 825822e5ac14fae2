//! Named parameter storage.
//!
//! A `ParamStore` owns every trainable tensor of a model under a unique name.
//! Iteration order is the sorted name order (BTreeMap), which keeps training
//! and serialization deterministic.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::tensor::Tensor;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a trainable tensor under a unique name.
    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        if self.params.contains_key(name) {
            return Err(Error::DuplicateParam(name.to_string()));
        }
        self.params.insert(name.to_string(), tensor.with_grad());
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    /// Total scalar parameter count over all registered tensors.
    pub fn count(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_sums_element_counts() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::zeros(&[3, 4])).unwrap();
        store.insert("b", Tensor::zeros(&[3])).unwrap();
        store.insert("s", Tensor::scalar(0.0)).unwrap();
        assert_eq!(store.count(), 16);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::zeros(&[2])).unwrap();
        assert!(matches!(
            store.insert("w", Tensor::zeros(&[2])),
            Err(Error::DuplicateParam(_))
        ));
    }
}
