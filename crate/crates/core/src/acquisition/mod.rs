//! Acquisition functions and top-B batch selection.
//!
//! Every acquisition produces an [`AcquisitionScores`]: one real score per
//! pair, larger meaning more informative. Pairs that were not scored (the
//! information-gain subset scheme, already-queried pairs under uniform,
//! zero entropy under the power transform) carry `-inf` and are only
//! selected when too few scored pairs remain.

mod imu;
mod model;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::simcore::{num_pairs, pair_at, pair_index};
use crate::{Error, Pair, Result};

pub use imu::{
    acq_imu, acq_imu_c, acq_maxexp, acq_maxmin, region_scores, triple_costs, triple_exp_cost,
    triple_min_cost, QueryRegion, QueryRegionScore, Reduction, TripleScan, TRIPLE_CLUSTERINGS,
};
pub use model::{acq_entropy, acq_information_gain, InfoGainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Uniform,
    Maxmin,
    Maxexp,
    ImuC,
    Entropy,
    InfoGain,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Uniform,
        Strategy::Maxmin,
        Strategy::Maxexp,
        Strategy::ImuC,
        Strategy::Entropy,
        Strategy::InfoGain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Uniform => "uniform",
            Strategy::Maxmin => "maxmin",
            Strategy::Maxexp => "maxexp",
            Strategy::ImuC => "imu-c",
            Strategy::Entropy => "entropy",
            Strategy::InfoGain => "info-gain",
        }
    }

    /// Whether scoring needs a mean-field state.
    pub fn uses_mean_field(self) -> bool {
        matches!(self, Strategy::Entropy | Strategy::InfoGain)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::UnknownStrategy(s.to_string()))
    }
}

/// Per-pair scores over all `n(n-1)/2` pairs, stored densely by pair index.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionScores {
    n: usize,
    scores: Vec<f64>,
}

impl AcquisitionScores {
    /// Score given to pairs that were not scored.
    pub const UNSCORED: f64 = f64::NEG_INFINITY;

    pub fn unscored(n: usize) -> Self {
        AcquisitionScores {
            n,
            scores: vec![Self::UNSCORED; num_pairs(n)],
        }
    }

    /// Scores in pair-index order. Non-finite entries count as unscored.
    pub fn from_dense(n: usize, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != num_pairs(n) {
            return Err(Error::ConfigMismatch(format!(
                "{} scores for {} pairs",
                scores.len(),
                num_pairs(n)
            )));
        }
        let scores = scores
            .into_iter()
            .map(|s| if s.is_finite() { s } else { Self::UNSCORED })
            .collect();
        Ok(AcquisitionScores { n, scores })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn default_score(&self) -> f64 {
        Self::UNSCORED
    }

    pub fn set(&mut self, pair: Pair, score: f64) {
        let idx = pair_index(self.n, pair);
        self.scores[idx] = if score.is_finite() { score } else { Self::UNSCORED };
    }

    pub fn get(&self, pair: Pair) -> Option<f64> {
        let s = self.scores[pair_index(self.n, pair)];
        s.is_finite().then_some(s)
    }

    pub fn num_scored(&self) -> usize {
        self.scores.iter().filter(|s| s.is_finite()).count()
    }

    pub fn scored(&self) -> impl Iterator<Item = (Pair, f64)> + '_ {
        self.scores
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_finite())
            .map(|(i, &s)| (pair_at(self.n, i), s))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }
}

/// I.i.d. `Open01` scores; pairs flagged in `queried` (by pair index) are
/// left unscored so they are only chosen once every other pair is exhausted.
pub fn acq_uniform(n: usize, queried: &[bool], rng: &mut impl Rng) -> Result<AcquisitionScores> {
    if queried.len() != num_pairs(n) {
        return Err(Error::ConfigMismatch(format!(
            "queried mask has {} entries for {} pairs",
            queried.len(),
            num_pairs(n)
        )));
    }
    let scores = queried
        .iter()
        .map(|&q| {
            let x: f64 = rng.sample(Open01);
            if q {
                AcquisitionScores::UNSCORED
            } else {
                x
            }
        })
        .collect();
    Ok(AcquisitionScores { n, scores })
}

/// The `b` highest-scoring pairs. Ties are broken by a random key drawn from
/// `rng`; if fewer than `b` pairs are scored, the rest are drawn uniformly
/// from the unscored pairs.
pub fn select_batch(scores: &AcquisitionScores, b: usize, rng: &mut impl Rng) -> Result<Vec<Pair>> {
    let total = scores.scores.len();
    if b == 0 {
        return Err(Error::param("batch size must be at least 1"));
    }
    if b > total {
        return Err(Error::param(format!("batch size {b} exceeds {total} pairs")));
    }
    let mut ranked: Vec<(f64, u64, usize)> = Vec::with_capacity(total);
    let mut rest = Vec::new();
    for (i, &s) in scores.scores.iter().enumerate() {
        let key: u64 = rng.random();
        if s.is_finite() {
            ranked.push((s, key, i));
        } else {
            rest.push(i);
        }
    }
    let take = b.min(ranked.len());
    let cmp = |x: &(f64, u64, usize), y: &(f64, u64, usize)| {
        y.0.total_cmp(&x.0).then(x.1.cmp(&y.1))
    };
    if take < ranked.len() {
        ranked.select_nth_unstable_by(take, cmp);
        ranked.truncate(take);
    }
    ranked.sort_unstable_by(cmp);
    let mut out: Vec<Pair> = ranked.iter().map(|r| pair_at(scores.n, r.2)).collect();
    if out.len() < b {
        rest.shuffle(rng);
        out.extend(rest[..b - out.len()].iter().map(|&i| pair_at(scores.n, i)));
    }
    Ok(out)
}
