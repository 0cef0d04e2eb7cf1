use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A partition of `0..n` encoded as a label vector with values in `0..k`.
///
/// Every label in `0..k` is used by at least one object.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Clustering {
    labels: Vec<usize>,
    k: usize,
}

impl Clustering {
    /// Accepts arbitrary label values and compacts them to `0..k`, keeping
    /// the relative order of the distinct values.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidClustering("no objects".into()));
        }
        let mut remap: BTreeMap<usize, usize> = labels.iter().map(|&l| (l, 0)).collect();
        for (i, slot) in remap.values_mut().enumerate() {
            *slot = i;
        }
        let k = remap.len();
        let labels = labels.into_iter().map(|l| remap[&l]).collect();
        Ok(Clustering { labels, k })
    }

    pub fn singletons(n: usize) -> Self {
        Clustering {
            labels: (0..n).collect(),
            k: n,
        }
    }

    pub fn single(n: usize) -> Self {
        Clustering {
            labels: vec![0; n],
            k: 1,
        }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, u: usize) -> usize {
        self.labels[u]
    }

    #[inline]
    pub fn same(&self, u: usize, v: usize) -> bool {
        self.labels[u] == self.labels[v]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Relabelled so that clusters are numbered by first appearance.
    pub fn canonical(&self) -> Clustering {
        let mut map = vec![usize::MAX; self.k];
        let mut next = 0;
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                if map[l] == usize::MAX {
                    map[l] = next;
                    next += 1;
                }
                map[l]
            })
            .collect();
        Clustering { labels, k: self.k }
    }

    /// True when both encode the same partition, regardless of label names.
    pub fn same_partition(&self, other: &Clustering) -> bool {
        self.n() == other.n() && self.canonical().labels == other.canonical().labels
    }
}

impl TryFrom<Vec<usize>> for Clustering {
    type Error = Error;

    fn try_from(labels: Vec<usize>) -> Result<Self> {
        Clustering::from_labels(labels)
    }
}

impl From<Clustering> for Vec<usize> {
    fn from(c: Clustering) -> Self {
        c.labels
    }
}
