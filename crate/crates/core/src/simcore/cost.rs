use super::{Clustering, SimilarityMatrix, SimilarityStore};

/// Anything that can enumerate its nonzero pairwise similarities.
pub trait Similarity {
    fn size(&self) -> usize;
    fn value(&self, u: usize, v: usize) -> f64;
    /// Calls `f(u, v, s)` once per stored pair with `u < v`.
    fn for_each_pair(&self, f: impl FnMut(usize, usize, f64));
}

impl Similarity for SimilarityStore {
    fn size(&self) -> usize {
        self.n()
    }

    fn value(&self, u: usize, v: usize) -> f64 {
        self.estimate(u, v)
    }

    fn for_each_pair(&self, mut f: impl FnMut(usize, usize, f64)) {
        for (p, s) in self.estimates() {
            f(p.u(), p.v(), s);
        }
    }
}

impl Similarity for SimilarityMatrix {
    fn size(&self) -> usize {
        self.n()
    }

    fn value(&self, u: usize, v: usize) -> f64 {
        self.get(u, v)
    }

    fn for_each_pair(&self, mut f: impl FnMut(usize, usize, f64)) {
        for (p, s) in self.pairs() {
            f(p.u(), p.v(), s);
        }
    }
}

/// Violation of a single similarity under a same/different assignment.
/// Zero similarities are treated like positive ones.
#[inline]
pub(crate) fn violation_value(s: f64, same: bool) -> f64 {
    if (same && s < 0.0) || (!same && s >= 0.0) {
        s.abs()
    } else {
        0.0
    }
}

pub fn violation(sim: &impl Similarity, u: usize, v: usize, c: &Clustering) -> f64 {
    violation_value(sim.value(u, v), c.same(u, v))
}

/// Correlation clustering cost: total violation over all pairs.
pub fn cost_r(sim: &impl Similarity, c: &Clustering) -> f64 {
    // Unstored pairs have S = 0 and never violate.
    let mut total = 0.0;
    sim.for_each_pair(|u, v, s| total += violation_value(s, c.same(u, v)));
    total
}

/// Max-correlation cost: negated sum of intra-cluster similarities.
pub fn cost_delta(sim: &impl Similarity, c: &Clustering) -> f64 {
    let mut total = 0.0;
    sim.for_each_pair(|u, v, s| {
        if c.same(u, v) {
            total -= s;
        }
    });
    total
}
