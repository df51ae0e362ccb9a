use std::collections::HashMap;
use std::hash::Hash;

use serde::Serialize;

use crate::error::{Error, Result};

/// A partition of `N` objects into `K` non-empty clusters.
///
/// Labels are 1-based and canonical: object 1 is in cluster 1 and new
/// cluster indices appear in order of first occurrence, so two equal
/// partitions always compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl ClusterAssignment {
    /// Canonicalizes arbitrary cluster keys (any hashable values).
    pub fn from_keys<T: Eq + Hash>(keys: &[T]) -> Result<Self> {
        if keys.is_empty() {
            return Err(Error::InvalidShape("empty label vector".into()));
        }
        let mut seen: HashMap<&T, usize> = HashMap::new();
        let labels = keys
            .iter()
            .map(|key| {
                let next = seen.len() + 1;
                *seen.entry(key).or_insert(next)
            })
            .collect();
        Ok(Self { labels, k: seen.len() })
    }

    /// Canonicalizes integer labels; the input values need not be contiguous.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        Self::from_keys(labels)
    }

    /// Every object in cluster 1.
    pub fn single(n: usize) -> Self {
        Self {
            labels: vec![1; n],
            k: 1,
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Labels shifted to 0-based component indices.
    pub fn indices(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l - 1).collect()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l - 1] += 1;
        }
        sizes
    }

    /// True when every cluster of `self` lies inside one cluster of `coarser`.
    pub fn refines(&self, coarser: &ClusterAssignment) -> bool {
        if self.len() != coarser.len() {
            return false;
        }
        let mut parent = vec![0usize; self.k];
        for (&fine, &coarse) in self.labels.iter().zip(&coarser.labels) {
            let slot = &mut parent[fine - 1];
            if *slot == 0 {
                *slot = coarse;
            } else if *slot != coarse {
                return false;
            }
        }
        true
    }
}
