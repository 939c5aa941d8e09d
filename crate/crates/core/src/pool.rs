use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Indices of samples that already carry an annotation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPool {
    indices: BTreeSet<usize>,
}

impl LabeledPool {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Duplicates collapse; every index must lie in `[0, n)`.
    pub fn new<I: IntoIterator<Item = usize>>(indices: I, n: usize) -> Result<Self> {
        let indices: BTreeSet<usize> = indices.into_iter().collect();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::Argument(format!(
                "labeled index {bad} out of range for {n} samples"
            )));
        }
        Ok(Self { indices })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.contains(&i)
    }

    /// Ascending order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    pub fn extend<I: IntoIterator<Item = usize>>(&mut self, indices: I) {
        self.indices.extend(indices);
    }

    /// Indices in `[0, n)` that are not labeled, ascending.
    pub fn unlabeled(&self, n: usize) -> Vec<usize> {
        (0..n).filter(|i| !self.indices.contains(i)).collect()
    }

    pub(crate) fn max_index(&self) -> Option<usize> {
        self.indices.last().copied()
    }
}
