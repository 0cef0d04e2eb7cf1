use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Pair, SimilarityMatrix};
use crate::{Error, Result};

/// Running sum and number of recorded values for one pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub sum: f64,
    pub count: u32,
}

impl Entry {
    pub fn estimate(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}

/// Sparse symmetric accumulator of pairwise similarity queries.
///
/// Only pairs that have received at least one value are stored. The estimate
/// of a pair is the arithmetic mean of every value recorded for it, and `0`
/// for pairs that were never recorded. Initial similarities are recorded as
/// ordinary values, so a later query averages with them.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityStore {
    n: usize,
    entries: BTreeMap<Pair, Entry>,
}

impl SimilarityStore {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::param(format!("need at least 2 objects, got {n}")));
        }
        Ok(SimilarityStore {
            n,
            entries: BTreeMap::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn pair(&self, u: usize, v: usize) -> Result<Pair> {
        Pair::checked(u, v, self.n)
    }

    fn check_value(value: f64) -> Result<()> {
        if !(-1.0..=1.0).contains(&value) {
            return Err(Error::OutOfRange(value));
        }
        Ok(())
    }

    /// Adds one observed value for `(u, v)`.
    pub fn record_query(&mut self, u: usize, v: usize, value: f64) -> Result<()> {
        let pair = self.pair(u, v)?;
        Self::check_value(value)?;
        let e = self.entries.entry(pair).or_default();
        e.sum += value;
        e.count += 1;
        Ok(())
    }

    /// Replaces whatever was recorded for `(u, v)` with a single value.
    pub fn set_initial(&mut self, u: usize, v: usize, value: f64) -> Result<()> {
        let pair = self.pair(u, v)?;
        Self::check_value(value)?;
        self.entries.insert(pair, Entry { sum: value, count: 1 });
        Ok(())
    }

    pub fn estimate(&self, u: usize, v: usize) -> f64 {
        if u == v {
            return 0.0;
        }
        Pair::new(u, v)
            .ok()
            .and_then(|p| self.entries.get(&p))
            .map_or(0.0, Entry::estimate)
    }

    pub fn entry(&self, u: usize, v: usize) -> Entry {
        Pair::new(u, v)
            .ok()
            .and_then(|p| self.entries.get(&p).copied())
            .unwrap_or_default()
    }

    pub fn count(&self, u: usize, v: usize) -> u32 {
        self.entry(u, v).count
    }

    /// Stored entries in ascending pair order.
    pub fn entries(&self) -> impl Iterator<Item = (Pair, Entry)> + '_ {
        self.entries.iter().map(|(p, e)| (*p, *e))
    }

    /// Pairs with a nonzero count and their current estimate.
    pub fn estimates(&self) -> impl Iterator<Item = (Pair, f64)> + '_ {
        self.entries.iter().map(|(p, e)| (*p, e.estimate()))
    }

    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    /// Total number of values recorded over all pairs.
    pub fn total_count(&self) -> u64 {
        self.entries.values().map(|e| e.count as u64).sum()
    }

    /// CSR snapshot of the current estimates.
    pub fn matrix(&self) -> SimilarityMatrix {
        SimilarityMatrix::from_sorted_pairs(self.n, self.estimates())
    }

    /// Builds a store where every nonzero entry of `dense` is one recorded
    /// value. Only the upper triangle is read.
    pub fn from_dense(dense: &[Vec<f64>]) -> Result<Self> {
        let mut store = SimilarityStore::new(dense.len())?;
        for (u, row) in dense.iter().enumerate() {
            for (v, &s) in row.iter().enumerate().skip(u + 1) {
                if s != 0.0 {
                    store.record_query(u, v, s)?;
                }
            }
        }
        Ok(store)
    }

    /// Line-oriented text form: a `n=<N>` header followed by `u v sum count`.
    pub fn to_text(&self) -> String {
        let mut out = format!("n={}\n", self.n);
        for (p, e) in &self.entries {
            let _ = writeln!(out, "{} {} {} {}", p.u(), p.v(), e.sum, e.count);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty similarity file".into()))?;
        let n: usize = header
            .trim()
            .strip_prefix("n=")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad header `{header}`")))?;
        let mut store = SimilarityStore::new(n)?;
        for (lineno, line) in lines.enumerate() {
            let bad = || Error::Parse(format!("line {}: `{line}`", lineno + 2));
            let mut it = line.split_whitespace();
            let (Some(u), Some(v), Some(sum), Some(count), None) =
                (it.next(), it.next(), it.next(), it.next(), it.next())
            else {
                return Err(bad());
            };
            let u: usize = u.parse().map_err(|_| bad())?;
            let v: usize = v.parse().map_err(|_| bad())?;
            let sum: f64 = sum.parse().map_err(|_| bad())?;
            let count: u32 = count.parse().map_err(|_| bad())?;
            let pair = Pair::checked(u, v, n)?;
            if u > v || count == 0 || store.entries.contains_key(&pair) {
                return Err(bad());
            }
            store.entries.insert(pair, Entry { sum, count });
        }
        Ok(store)
    }
}
