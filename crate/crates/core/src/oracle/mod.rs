//! Ground truth, the non-persistent noisy oracle and initial similarity
//! construction.

mod dataset;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::simcore::{all_pairs, num_pairs, pair_at};
use crate::{Clustering, Error, Pair, Result, SimilarityStore};

pub use dataset::{gen_synthetic, lloyd_kmeans, read_csv, read_csv_from, Dataset};

/// True cluster labels; `S*_uv` is `+1` for equal labels and `-1` otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    labels: Vec<usize>,
}

impl GroundTruth {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::param("ground truth needs at least 2 objects"));
        }
        Ok(GroundTruth { labels })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn clustering(&self) -> Clustering {
        Clustering::from_labels(self.labels.clone()).expect("non-empty")
    }

    pub fn similarity(&self, u: usize, v: usize) -> Result<f64> {
        let p = Pair::checked(u, v, self.n())?;
        Ok(if self.labels[p.u()] == self.labels[p.v()] { 1.0 } else { -1.0 })
    }

    /// Store holding `S*` for every pair.
    pub fn full_store(&self) -> SimilarityStore {
        let mut s = SimilarityStore::new(self.n()).expect("n >= 2");
        for p in all_pairs(self.n()) {
            s.set_initial(p.u(), p.v(), self.similarity(p.u(), p.v()).expect("valid pair"))
                .expect("in range");
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    gamma: f64,
}

impl NoiseModel {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::param(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        Ok(NoiseModel { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `truth` with probability `1 - γ`, otherwise a uniform draw from
    /// `[-1, 1]`. Every call is independent.
    pub fn corrupt(&self, truth: f64, rng: &mut impl Rng) -> f64 {
        if rng.random::<f64>() < self.gamma {
            rng.random_range(-1.0..=1.0)
        } else {
            truth
        }
    }
}

/// One oracle answer for the pair `(u, v)`.
pub fn oracle_answer(
    gt: &GroundTruth,
    noise: &NoiseModel,
    u: usize,
    v: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    Ok(noise.corrupt(gt.similarity(u, v)?, rng))
}

/// A simulated oracle owning its random stream.
#[derive(Debug, Clone)]
pub struct NoisyOracle {
    truth: GroundTruth,
    noise: NoiseModel,
    rng: ChaCha8Rng,
}

impl NoisyOracle {
    pub fn new(truth: GroundTruth, noise: NoiseModel, rng: ChaCha8Rng) -> Self {
        NoisyOracle { truth, noise, rng }
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn answer(&mut self, pair: Pair) -> Result<f64> {
        oracle_answer(&self.truth, &self.noise, pair.u(), pair.v(), &mut self.rng)
    }
}

fn subset(n: usize, fraction: f64, rng: &mut impl Rng) -> Result<Vec<Pair>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::param(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let total = num_pairs(n);
    let count = (fraction * total as f64).floor() as usize;
    if count == 0 {
        return Err(Error::param(format!(
            "fraction {fraction} selects no pair out of {total}"
        )));
    }
    let mut idx = sample(rng, total, count).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| pair_at(n, i)).collect())
}

/// Store with `⌊fraction·|E|⌋` uniformly chosen pairs set to `S*`. Each value
/// counts as one pseudo-query. With `noisy`, the values are oracle answers
/// instead of exact reads.
pub fn init_random_subset(
    gt: &GroundTruth,
    fraction: f64,
    rng: &mut impl Rng,
    noisy: Option<&mut NoisyOracle>,
) -> Result<SimilarityStore> {
    let mut store = SimilarityStore::new(gt.n())?;
    inject_subset(&mut store, gt, fraction, rng, noisy)?;
    Ok(store)
}

/// Overwrites a random subset of pairs in `store` with `S*` (or oracle
/// answers), each as a single pseudo-query.
pub fn inject_subset(
    store: &mut SimilarityStore,
    gt: &GroundTruth,
    fraction: f64,
    rng: &mut impl Rng,
    mut noisy: Option<&mut NoisyOracle>,
) -> Result<usize> {
    if store.n() != gt.n() {
        return Err(Error::ConfigMismatch(format!(
            "store has {} objects, ground truth {}",
            store.n(),
            gt.n()
        )));
    }
    let pairs = subset(gt.n(), fraction, rng)?;
    for &p in &pairs {
        let value = match noisy.as_deref_mut() {
            Some(o) => o.answer(p)?,
            None => gt.similarity(p.u(), p.v())?,
        };
        store.set_initial(p.u(), p.v(), value)?;
    }
    Ok(pairs.len())
}

/// `+magnitude` for co-clustered pairs and `-magnitude` otherwise.
pub fn init_from_clustering(c0: &Clustering, magnitude: f64) -> Result<SimilarityStore> {
    if !(magnitude > 0.0 && magnitude <= 1.0) {
        return Err(Error::param(format!("magnitude must lie in (0, 1], got {magnitude}")));
    }
    let mut store = SimilarityStore::new(c0.n())?;
    for p in all_pairs(c0.n()) {
        let s = if c0.same(p.u(), p.v()) { magnitude } else { -magnitude };
        store.set_initial(p.u(), p.v(), s)?;
    }
    Ok(store)
}
