//! Registry of scalar base quantities.
//!
//! Every random matrix in the space is an affine combination of registered
//! scalar quantities (population covariances `V_ij`, sample covariances
//! `S_ij`, or anything user-defined). The registry assigns each label a
//! stable dense id so belief stores can keep expectations and covariances
//! in plain vectors and matrices.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Opaque handle for a registered scalar quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QuantityId(pub(crate) usize);

impl QuantityId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered, label-injective registry of quantities.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a new label. Labels are unique; re-registering is an error.
    pub fn insert(&mut self, label: &str) -> Result<QuantityId> {
        if self.index.contains_key(label) {
            return Err(Error::DuplicateLabel {
                label: label.to_string(),
            });
        }
        let id = self.labels.len();
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), id);
        Ok(QuantityId(id))
    }

    pub fn id(&self, label: &str) -> Option<QuantityId> {
        self.index.get(label).copied().map(QuantityId)
    }

    pub fn label(&self, id: QuantityId) -> &str {
        &self.labels[id.0]
    }

    pub fn contains(&self, id: QuantityId) -> bool {
        id.0 < self.labels.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Ids in registration order.
    pub fn ids(&self) -> impl Iterator<Item = QuantityId> + '_ {
        (0..self.labels.len()).map(QuantityId)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_unique() {
        let mut reg = Registry::new();
        let a = reg.insert("V_11").unwrap();
        assert!(matches!(
            reg.insert("V_11"),
            Err(Error::DuplicateLabel { .. })
        ));
        assert_eq!(reg.id("V_11"), Some(a));
        assert_eq!(reg.label(a), "V_11");
    }

    #[test]
    fn ids_are_dense_and_ordered() {
        let mut reg = Registry::new();
        let a = reg.insert("a").unwrap();
        let b = reg.insert("b").unwrap();
        assert_eq!(a.index(), 0);
        assert_eq!(b.index(), 1);
        assert_eq!(reg.ids().collect::<Vec<_>>(), vec![a, b]);
    }
}
