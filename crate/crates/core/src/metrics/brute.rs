//! Exhaustive enumeration over label vectors and set partitions.
//!
//! These are reference oracles for small instances only: the Gibbs
//! enumerator visits all k^n label vectors, the cost enumerator all set
//! partitions of n objects.

use ndarray::Array2;

use crate::simcore::{cost_delta, cost_r, Clustering, Similarity, SimilarityMatrix};
use crate::{Error, Result};

const MAX_LABEL_VECTORS: f64 = 1e7;
const MAX_PARTITION_OBJECTS: usize = 9;
const TIE_TOL: f64 = 1e-9;

fn dense(sim: &impl Similarity) -> (usize, Vec<f64>) {
    let n = sim.size();
    let mut d = vec![0.0; n * n];
    sim.for_each_pair(|u, v, s| {
        d[u * n + v] = s;
        d[v * n + u] = s;
    });
    (n, d)
}

/// Decodes label vector number `index` (object u is base-k digit u).
fn decode(mut index: usize, n: usize, k: usize, out: &mut [usize]) {
    for slot in out.iter_mut().take(n) {
        *slot = index % k;
        index /= k;
    }
}

/// Exact Gibbs distribution `P(c) ∝ exp(-β Δ(c))` over all label vectors
/// in `{0..k}^n`.
#[derive(Debug, Clone)]
pub struct GibbsEnumeration {
    n: usize,
    k: usize,
    beta: f64,
    deltas: Vec<f64>,
    log_probs: Vec<f64>,
    log_z: f64,
}

pub fn brute_gibbs(sim: &impl Similarity, k: usize, beta: f64) -> Result<GibbsEnumeration> {
    let (n, s) = dense(sim);
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    if (k as f64).powi(n as i32) > MAX_LABEL_VECTORS {
        return Err(Error::TooLarge(format!("{k}^{n} label vectors")));
    }
    let total = k.pow(n as u32);
    let mut labels = vec![0usize; n];
    let deltas: Vec<f64> = (0..total)
        .map(|idx| {
            decode(idx, n, k, &mut labels);
            let mut d = 0.0;
            for u in 0..n {
                for v in u + 1..n {
                    if labels[u] == labels[v] {
                        d -= s[u * n + v];
                    }
                }
            }
            d
        })
        .collect();
    let max_logit = deltas.iter().map(|d| -beta * d).fold(f64::NEG_INFINITY, f64::max);
    let log_z = max_logit
        + deltas
            .iter()
            .map(|d| (-beta * d - max_logit).exp())
            .sum::<f64>()
            .ln();
    let log_probs = deltas.iter().map(|d| -beta * d - log_z).collect();
    Ok(GibbsEnumeration {
        n,
        k,
        beta,
        deltas,
        log_probs,
        log_z,
    })
}

impl GibbsEnumeration {
    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn labels(&self, index: usize) -> Vec<usize> {
        let mut out = vec![0; self.n];
        decode(index, self.n, self.k, &mut out);
        out
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.log_probs[index].exp()
    }

    pub fn delta(&self, index: usize) -> f64 {
        self.deltas[index]
    }

    pub fn log_partition(&self) -> f64 {
        self.log_z
    }

    /// `-(1/β) log Z`.
    pub fn free_energy(&self) -> f64 {
        -self.log_z / self.beta
    }

    fn expect(&self, mut f: impl FnMut(&[usize]) -> f64) -> f64 {
        let mut labels = vec![0; self.n];
        (0..self.len())
            .map(|i| {
                decode(i, self.n, self.k, &mut labels);
                self.prob(i) * f(&labels)
            })
            .sum()
    }

    /// Exact `p(c_u = c_v)`.
    pub fn p_same(&self, u: usize, v: usize) -> f64 {
        self.expect(|l| f64::from(u8::from(l[u] == l[v])))
    }

    /// Exact `p(c_u = label)`.
    pub fn marginal(&self, u: usize, label: usize) -> f64 {
        self.expect(|l| f64::from(u8::from(l[u] == label)))
    }

    /// Joint entropy of the label vector (nats).
    pub fn entropy(&self) -> f64 {
        self.log_probs
            .iter()
            .map(|&lp| {
                let p = lp.exp();
                if p > 0.0 {
                    -p * lp
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Exact `KL(Q || P)` for a factorial `Q(c) = Π_u q[u, c_u]`.
    pub fn kl_from_factorial(&self, q: &Array2<f64>) -> f64 {
        let mut labels = vec![0; self.n];
        let mut kl = 0.0;
        for i in 0..self.len() {
            decode(i, self.n, self.k, &mut labels);
            let qc = factorial_prob(q, &labels);
            if qc > 0.0 {
                kl += qc * (qc.ln() - self.log_probs[i]);
            }
        }
        kl
    }

    /// `E_Q[Δ]` under a factorial `Q`.
    pub fn expected_delta(&self, q: &Array2<f64>) -> f64 {
        let mut labels = vec![0; self.n];
        (0..self.len())
            .map(|i| {
                decode(i, self.n, self.k, &mut labels);
                factorial_prob(q, &labels) * self.deltas[i]
            })
            .sum()
    }
}

fn factorial_prob(q: &Array2<f64>, labels: &[usize]) -> f64 {
    labels.iter().enumerate().map(|(u, &l)| q[[u, l]]).product()
}

/// All set partitions of `n` objects as restricted growth strings.
pub fn enumerate_partitions(n: usize) -> Vec<Clustering> {
    fn rec(pos: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Clustering>) {
        if pos == cur.len() {
            out.push(Clustering::from_labels(cur.clone()).expect("non-empty"));
            return;
        }
        for l in 0..=max + 1 {
            cur[pos] = l;
            rec(pos + 1, max.max(l), cur, out);
        }
    }
    if n == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut cur = vec![0; n];
    rec(1, 0, &mut cur, &mut out);
    out
}

/// Exhaustive minima of both cost functions over every partition.
#[derive(Debug, Clone)]
pub struct MinCostReport {
    pub min_delta: f64,
    pub min_r: f64,
    pub argmin_delta: Vec<Clustering>,
    pub argmin_r: Vec<Clustering>,
    /// Smallest and largest `R(c) - Δ(c)` over all partitions.
    pub offset_range: (f64, f64),
    pub partitions: usize,
}

impl MinCostReport {
    pub fn argmins_agree(&self) -> bool {
        self.argmin_delta == self.argmin_r
    }
}

pub fn brute_min_cost(sim: &SimilarityMatrix) -> Result<MinCostReport> {
    let n = sim.n();
    if n > MAX_PARTITION_OBJECTS {
        return Err(Error::TooLarge(format!(
            "{n} objects (limit {MAX_PARTITION_OBJECTS})"
        )));
    }
    let partitions = enumerate_partitions(n);
    let costs: Vec<(f64, f64)> = partitions
        .iter()
        .map(|c| (cost_delta(sim, c), cost_r(sim, c)))
        .collect();
    let min_delta = costs.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let min_r = costs.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let pick = |f: &dyn Fn(&(f64, f64)) -> bool| -> Vec<Clustering> {
        partitions
            .iter()
            .zip(&costs)
            .filter(|(_, c)| f(c))
            .map(|(p, _)| p.clone())
            .collect()
    };
    let argmin_delta = pick(&|c| c.0 <= min_delta + TIE_TOL);
    let argmin_r = pick(&|c| c.1 <= min_r + TIE_TOL);
    let offsets = costs.iter().map(|(d, r)| r - d);
    let offset_range = offsets.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x), hi.max(x))
    });
    Ok(MinCostReport {
        min_delta,
        min_r,
        argmin_delta,
        argmin_r,
        offset_range,
        partitions: partitions.len(),
    })
}
