//! Inconsistency and magnitude-uncertainty (IMU) scores over query regions:
//! the generic hook, cluster-pair regions (IMU-C) and triples (maxmin,
//! maxexp).

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AcquisitionScores;
use crate::simcore::{pair_index, violation_value, SimilarityMatrix};
use crate::{Clustering, Error, Pair, Result};

/// How scores of several regions containing the same pair are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    #[default]
    Max,
    Sum,
}

/// A region of pairs together with a clustering of the objects it touches.
#[derive(Debug, Clone)]
pub struct QueryRegion {
    pub pairs: Vec<Pair>,
    /// Cluster label per object for the objects appearing in `pairs`.
    pub labels: BTreeMap<usize, usize>,
}

impl QueryRegion {
    fn label(&self, u: usize) -> Result<usize> {
        self.labels
            .get(&u)
            .copied()
            .ok_or_else(|| Error::InvalidClustering(format!("region has no label for object {u}")))
    }

    /// Normalised violation cost and negative mean magnitude.
    pub fn costs(&self, sim: &SimilarityMatrix) -> Result<(f64, f64)> {
        if self.pairs.is_empty() {
            return Err(Error::param("empty query region"));
        }
        let (mut viol, mut mag) = (0.0, 0.0);
        for p in &self.pairs {
            let s = sim.get(p.u(), p.v());
            viol += violation_value(s, self.label(p.u())? == self.label(p.v())?);
            mag += s.abs();
        }
        let size = self.pairs.len() as f64;
        Ok((viol / size, -mag / size))
    }
}

/// Generic IMU score: reduce `r_d + α s_d` over the regions containing a
/// pair, then subtract `|S_uv|`. Pairs in no region stay unscored.
pub fn acq_imu(
    sim: &SimilarityMatrix,
    regions: &[QueryRegion],
    alpha: f64,
    reduction: Reduction,
) -> Result<AcquisitionScores> {
    let n = sim.n();
    let mut acc: Vec<Option<f64>> = vec![None; crate::simcore::num_pairs(n)];
    for region in regions {
        let (r, s) = region.costs(sim)?;
        let value = r + alpha * s;
        for &p in &region.pairs {
            if p.v() >= n {
                return Err(Error::InvalidPair(p.u(), p.v()));
            }
            let slot = &mut acc[pair_index(n, p)];
            *slot = Some(match (*slot, reduction) {
                (None, _) => value,
                (Some(x), Reduction::Max) => x.max(value),
                (Some(x), Reduction::Sum) => x + value,
            });
        }
    }
    let scores = acc
        .into_iter()
        .enumerate()
        .map(|(i, a)| match a {
            Some(x) => {
                let p = crate::simcore::pair_at(n, i);
                x - sim.get(p.u(), p.v()).abs()
            }
            None => AcquisitionScores::UNSCORED,
        })
        .collect();
    AcquisitionScores::from_dense(n, scores)
}

/// Aggregates for one cluster-pair region `(l, k)`, `l <= k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryRegionScore {
    pub region: (usize, usize),
    pub size: usize,
    pub r_d: f64,
    pub s_d: f64,
}

fn region_slot(k: usize, a: usize, b: usize) -> usize {
    let (l, m) = if a <= b { (a, b) } else { (b, a) };
    l * k + m
}

/// Region aggregates for every non-empty cluster-pair region of `c`.
pub fn region_scores(sim: &SimilarityMatrix, c: &Clustering) -> Result<Vec<QueryRegionScore>> {
    if c.n() != sim.n() {
        return Err(Error::ConfigMismatch(format!(
            "clustering has {} objects, similarity has {}",
            c.n(),
            sim.n()
        )));
    }
    let k = c.k();
    let mut viol = vec![0.0; k * k];
    let mut mag = vec![0.0; k * k];
    for (p, s) in sim.pairs() {
        let (a, b) = (c.label(p.u()), c.label(p.v()));
        let slot = region_slot(k, a, b);
        viol[slot] += violation_value(s, a == b);
        mag[slot] += s.abs();
    }
    let sizes = c.sizes();
    let mut out = Vec::new();
    for l in 0..k {
        for m in l..k {
            let size = if l == m {
                sizes[l] * (sizes[l] - 1) / 2
            } else {
                sizes[l] * sizes[m]
            };
            if size == 0 {
                continue;
            }
            let slot = l * k + m;
            out.push(QueryRegionScore {
                region: (l, m),
                size,
                r_d: viol[slot] / size as f64,
                s_d: -mag[slot] / size as f64,
            });
        }
    }
    Ok(out)
}

/// IMU-C: regions are the intra-cluster pair sets and the pair sets between
/// two clusters of `c`; each pair lies in exactly one region.
pub fn acq_imu_c(sim: &SimilarityMatrix, c: &Clustering, alpha: f64) -> Result<AcquisitionScores> {
    let k = c.k();
    let mut table = vec![0.0; k * k];
    for r in region_scores(sim, c)? {
        table[r.region.0 * k + r.region.1] = r.r_d + alpha * r.s_d;
    }
    let n = sim.n();
    let dense = sim.to_dense();
    let mut scores = Vec::with_capacity(crate::simcore::num_pairs(n));
    for u in 0..n {
        for v in u + 1..n {
            let base = table[region_slot(k, c.label(u), c.label(v))];
            scores.push(base - dense[u * n + v].abs());
        }
    }
    AcquisitionScores::from_dense(n, scores)
}

/// The five clusterings of a triple `(u, v, w)`.
pub const TRIPLE_CLUSTERINGS: [[usize; 3]; 5] =
    [[0, 0, 0], [0, 1, 1], [0, 1, 0], [0, 0, 1], [0, 1, 2]];

/// Unnormalised violation cost of each triple clustering.
pub fn triple_costs(s_uv: f64, s_uw: f64, s_vw: f64) -> [f64; 5] {
    TRIPLE_CLUSTERINGS.map(|c| {
        violation_value(s_uv, c[0] == c[1])
            + violation_value(s_uw, c[0] == c[2])
            + violation_value(s_vw, c[1] == c[2])
    })
}

/// Smallest normalised triple cost.
pub fn triple_min_cost(costs: &[f64; 5]) -> f64 {
    costs.iter().copied().fold(f64::INFINITY, f64::min) / 3.0
}

/// Boltzmann-weighted mean of the normalised triple costs.
pub fn triple_exp_cost(costs: &[f64; 5], beta_exp: f64) -> f64 {
    let norm = costs.map(|c| c / 3.0);
    let min = norm.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut num, mut den) = (0.0, 0.0);
    for c in norm {
        let w = (-beta_exp * (c - min)).exp();
        num += w * c;
        den += w;
    }
    num / den
}

/// Witness sampling for the triple scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleScan {
    /// Above this many objects each pair only looks at `max_witnesses`
    /// randomly drawn third objects.
    pub full_scan_limit: usize,
    pub max_witnesses: usize,
}

impl Default for TripleScan {
    fn default() -> Self {
        TripleScan {
            full_scan_limit: 600,
            max_witnesses: 600,
        }
    }
}

fn triple_scores(
    sim: &SimilarityMatrix,
    scan: &TripleScan,
    rng: &mut impl Rng,
    inconsistency: impl Fn(&[f64; 5]) -> f64,
) -> Result<AcquisitionScores> {
    let n = sim.n();
    if n < 3 {
        return Err(Error::param("triple scores need at least 3 objects"));
    }
    let s = sim.to_dense();
    let mut best = vec![f64::NEG_INFINITY; crate::simcore::num_pairs(n)];
    if n <= scan.full_scan_limit {
        for u in 0..n {
            for v in u + 1..n {
                let uv = pair_index(n, Pair::new(u, v)?);
                let s_uv = s[u * n + v];
                for w in v + 1..n {
                    let t = inconsistency(&triple_costs(s_uv, s[u * n + w], s[v * n + w]));
                    let uw = pair_index(n, Pair::new(u, w)?);
                    let vw = pair_index(n, Pair::new(v, w)?);
                    for idx in [uv, uw, vw] {
                        if t > best[idx] {
                            best[idx] = t;
                        }
                    }
                }
            }
        }
    } else {
        let m = scan.max_witnesses.clamp(1, n - 2);
        for u in 0..n {
            for v in u + 1..n {
                let idx = pair_index(n, Pair::new(u, v)?);
                let s_uv = s[u * n + v];
                let mut taken = 0;
                for w in sample(rng, n, (m + 2).min(n)) {
                    if w == u || w == v || taken == m {
                        continue;
                    }
                    taken += 1;
                    let t = inconsistency(&triple_costs(s_uv, s[u * n + w], s[v * n + w]));
                    best[idx] = best[idx].max(t);
                }
            }
        }
    }
    let mut i = 0;
    for u in 0..n {
        for v in u + 1..n {
            best[i] -= s[u * n + v].abs();
            i += 1;
        }
    }
    AcquisitionScores::from_dense(n, best)
}

/// maxmin: the most inconsistent triple containing the pair, judged by its
/// best clustering, minus the pair's magnitude.
pub fn acq_maxmin(sim: &SimilarityMatrix, scan: &TripleScan, rng: &mut impl Rng) -> Result<AcquisitionScores> {
    triple_scores(sim, scan, rng, triple_min_cost)
}

/// maxexp: as maxmin but with the Boltzmann-weighted mean triple cost.
pub fn acq_maxexp(
    sim: &SimilarityMatrix,
    beta_exp: f64,
    scan: &TripleScan,
    rng: &mut impl Rng,
) -> Result<AcquisitionScores> {
    if !(beta_exp > 0.0) {
        return Err(Error::param(format!("beta_exp must be positive, got {beta_exp}")));
    }
    triple_scores(sim, scan, rng, |c| triple_exp_cost(c, beta_exp))
}
