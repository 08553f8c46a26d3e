use indexmap::IndexMap;

use super::tensor::{Float, Tensor};
use super::NnError;

/// Ordered, uniquely named set of parameter tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightStore<T = f32> {
    entries: IndexMap<String, Tensor<T>>,
}

impl<T: Float> WeightStore<T> {
    pub fn new() -> Self {
        Self {
            entries: IndexMap::new(),
        }
    }

    /// Adds a new entry; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<(), NnError> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(NnError::DuplicateName(name));
        }
        self.entries.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>, NnError> {
        self.entries
            .get(name)
            .ok_or_else(|| NnError::MissingParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>, NnError> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| NnError::MissingParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for t in self.entries.values_mut() {
            t.data_mut().fill(T::zero());
        }
    }

    /// Accumulates `tensor` into the entry `name`, creating it if absent.
    pub fn accumulate(&mut self, name: &str, tensor: &Tensor<T>) -> Result<(), NnError> {
        match self.entries.get_mut(name) {
            Some(t) => t.add_assign(tensor),
            None => {
                self.entries.insert(name.to_string(), tensor.clone());
                Ok(())
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in self.entries.values_mut() {
            t.scale(factor);
        }
    }

    pub fn cast<U: Float>(&self) -> WeightStore<U> {
        WeightStore {
            entries: self.entries.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// Checks that `other` has exactly the same names, in order, with the same shapes.
    pub fn same_layout(&self, other: &WeightStore<T>) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((ka, va), (kb, vb))| ka == kb && va.shape() == vb.shape())
    }
}
