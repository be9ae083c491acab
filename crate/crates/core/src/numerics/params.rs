use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub tensor: Tensor,
    pub trainable: bool,
}

/// Named tensors in insertion order. Iteration order is the insertion order,
/// which every producer in this crate keeps fixed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSet {
    entries: Vec<ParamEntry>,
    index: BTreeMap<String, usize>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor, trainable: bool) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::DuplicateParameter(name.to_string()));
        }
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            tensor,
            trainable,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.entries[i].tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        match self.index_of(name) {
            Some(i) => Some(&mut self.entries[i].tensor),
            None => None,
        }
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn entry(&self, i: usize) -> &ParamEntry {
        &self.entries[i]
    }

    pub fn entry_mut(&mut self, i: usize) -> &mut ParamEntry {
        &mut self.entries[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamEntry> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ParamEntry> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    /// Same names, shapes and flags, all values zero.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for e in &mut out.entries {
            e.tensor = Tensor::zeros(e.tensor.shape());
        }
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.len()).sum()
    }

    /// `self += scale * other`, entry by entry. Both sets must share layout.
    pub fn add_scaled(&mut self, other: &ParameterSet, scale: f64) {
        assert_eq!(self.entries.len(), other.entries.len());
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            debug_assert_eq!(a.name, b.name);
            for (x, y) in a.tensor.data_mut().iter_mut().zip(b.tensor.data()) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for e in &mut self.entries {
            for x in e.tensor.data_mut() {
                *x *= s;
            }
        }
    }

    /// Global L2 norm over all entries, accumulated in entry order.
    pub fn global_norm(&self) -> f64 {
        let ss: f64 = self.entries.iter().map(|e| e.tensor.sum_squares()).sum();
        super::math::sqrt(ss)
    }

    /// Checks that `other` has exactly the same names and shapes.
    pub fn check_layout(&self, other: &ParameterSet) -> Result<()> {
        for e in &self.entries {
            let t = other.require(&e.name)?;
            if t.shape() != e.tensor.shape() {
                return Err(Error::Shape {
                    context: e.name.clone(),
                    expected: alloc::format!("{:?}", e.tensor.shape()),
                    got: alloc::format!("{:?}", t.shape()),
                });
            }
        }
        if other.len() != self.len() {
            let extra = other
                .names()
                .find(|n| !self.contains(n))
                .unwrap_or_default()
                .to_string();
            return Err(Error::InvalidConfig(alloc::format!(
                "unexpected parameter `{}`",
                extra
            )));
        }
        Ok(())
    }
}
