use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{InitKind, LoopSettings, Problem, RunConfig};
use crate::acquisition::{
    acq_entropy, acq_imu_c, acq_information_gain, acq_maxexp, acq_maxmin, acq_uniform,
    select_batch, AcquisitionScores, InfoGainReport, Strategy,
};
use crate::clusterer::{local_search, LocalSearchConfig};
use crate::meanfield::mean_field;
use crate::metrics::{ami, ari, auc};
use crate::oracle::{
    init_from_clustering, init_random_subset, inject_subset, lloyd_kmeans, NoiseModel, NoisyOracle,
};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::simcore::{num_pairs, pair_index};
use crate::{Clustering, Error, Pair, Result, SimilarityStore};

fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// A batch proposed for querying.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub pairs: Vec<Pair>,
    pub ms_acq: f64,
    /// Scoring fell back to uniform because mean-field did not converge.
    pub degraded: bool,
    pub info_gain: Option<InfoGainReport>,
}

/// The state of one active clustering run between oracle calls.
///
/// Iteration `t` (1-based) scores pairs against the clustering of the
/// previous iteration, the caller queries the proposed batch and feeds the
/// answers back with [`ActiveLoop::record`], and [`ActiveLoop::finish_batch`]
/// re-clusters warm-started from the previous clustering.
#[derive(Debug, Clone)]
pub struct ActiveLoop {
    settings: LoopSettings,
    seed: u64,
    store: SimilarityStore,
    clustering: Clustering,
    queried: Vec<u32>,
    iteration: usize,
    batch_answers: usize,
    batch_requeried: usize,
}

impl ActiveLoop {
    /// Clusters the initial store from all singletons. Returns the loop and
    /// the clustering time in milliseconds.
    pub fn new(settings: LoopSettings, store: SimilarityStore, seed: u64) -> Result<(Self, f64)> {
        let n = store.n();
        settings.validate(n)?;
        let mut lp = ActiveLoop {
            settings,
            seed,
            store,
            clustering: Clustering::singletons(n),
            queried: vec![0; num_pairs(n)],
            iteration: 0,
            batch_answers: 0,
            batch_requeried: 0,
        };
        let ms = lp.recluster(None)?;
        Ok((lp, ms))
    }

    pub fn settings(&self) -> &LoopSettings {
        &self.settings
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.store.n()
    }

    pub fn store(&self) -> &SimilarityStore {
        &self.store
    }

    pub fn clustering(&self) -> &Clustering {
        &self.clustering
    }

    /// Completed iterations.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Oracle answers recorded per pair (pair-index order), excluding the
    /// initial pseudo-queries.
    pub fn query_counts(&self) -> &[u32] {
        &self.queried
    }

    pub fn total_queries(&self) -> u64 {
        self.queried.iter().map(|&c| u64::from(c)).sum()
    }

    fn recluster(&mut self, warm: Option<Clustering>) -> Result<f64> {
        let start = Instant::now();
        let cfg = LocalSearchConfig {
            max_sweeps: self.settings.max_sweeps,
            warm_start: warm,
            seed: derive_seed(self.seed, Stream::Cluster, self.iteration as u64),
        };
        self.clustering = local_search(&self.store.matrix(), &cfg)?.clustering;
        Ok(millis(start))
    }

    fn score(&self, t: u64) -> Result<(AcquisitionScores, bool, Option<InfoGainReport>)> {
        let s = &self.settings;
        let n = self.n();
        let mut rng = stream_rng(self.seed, Stream::Acquisition, t);
        let uniform = |rng: &mut _| {
            let mask: Vec<bool> = self.queried.iter().map(|&c| c > 0).collect();
            acq_uniform(n, &mask, rng)
        };
        let sim = self.store.matrix();
        Ok(match s.strategy {
            Strategy::Uniform => (uniform(&mut rng)?, false, None),
            Strategy::Maxmin => (acq_maxmin(&sim, &s.triple_scan, &mut rng)?, false, None),
            Strategy::Maxexp => (acq_maxexp(&sim, s.beta_exp, &s.triple_scan, &mut rng)?, false, None),
            Strategy::ImuC => (acq_imu_c(&sim, &self.clustering, s.alpha)?, false, None),
            Strategy::Entropy | Strategy::InfoGain => {
                let state = mean_field(&sim, &self.clustering, &s.mean_field)?;
                if !state.converged {
                    tracing::warn!(
                        iteration = t,
                        iters = state.iterations,
                        "mean-field did not converge; scoring uniformly"
                    );
                    (uniform(&mut rng)?, true, None)
                } else if s.strategy == Strategy::Entropy {
                    (acq_entropy(&state, s.power_diversity, &mut rng), false, None)
                } else {
                    let (scores, report) =
                        acq_information_gain(&sim, &state, s.subset_size, &s.mean_field, &mut rng)?;
                    (scores, false, Some(report))
                }
            }
        })
    }

    /// Scores pairs for the next iteration and selects its batch.
    pub fn propose(&self) -> Result<Proposal> {
        let start = Instant::now();
        let t = self.iteration as u64 + 1;
        let (scores, degraded, info_gain) = self.score(t)?;
        let pairs = select_batch(
            &scores,
            self.settings.batch_size,
            &mut stream_rng(self.seed, Stream::Selection, t),
        )?;
        Ok(Proposal {
            pairs,
            ms_acq: millis(start),
            degraded,
            info_gain,
        })
    }

    /// Folds one oracle answer into the running averages. Returns whether
    /// the pair had been queried in an earlier batch.
    pub fn record(&mut self, pair: Pair, value: f64) -> Result<bool> {
        self.store.record_query(pair.u(), pair.v(), value)?;
        let idx = pair_index(self.n(), pair);
        let slot = &mut self.queried[idx];
        let requery = *slot > 0;
        *slot += 1;
        self.batch_answers += 1;
        self.batch_requeried += usize::from(requery);
        Ok(requery)
    }

    /// Closes the current batch: re-clusters warm-started from the previous
    /// clustering. Returns `(clustering ms, re-queried pairs in the batch)`.
    pub fn finish_batch(&mut self) -> Result<(f64, usize)> {
        self.iteration += 1;
        let ms = self.recluster(Some(self.clustering.clone()))?;
        let requeried = std::mem::take(&mut self.batch_requeried);
        self.batch_answers = 0;
        Ok((ms, requeried))
    }

    /// Answers recorded since the last [`ActiveLoop::finish_batch`].
    pub fn pending_answers(&self) -> usize {
        self.batch_answers
    }
}

/// One line of a run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub iter: usize,
    pub queries: u64,
    pub ari: f64,
    pub ami: f64,
    pub k: usize,
    pub requeried: usize,
    pub ms_cluster: f64,
    pub ms_acq: f64,
    pub degraded: bool,
    pub acq: Strategy,
    pub seed: u64,
    pub config_hash: String,
}

impl IterationRow {
    /// The row without wall-clock fields, for reproducibility checks.
    pub fn metrics_only(&self) -> IterationRow {
        IterationRow {
            ms_cluster: 0.0,
            ms_acq: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub config_hash: String,
    pub acq: Strategy,
    pub rows: Vec<IterationRow>,
    /// Conditioned mean-field runs that hit the iteration limit.
    pub ig_non_converged: usize,
}

impl RunRecord {
    pub fn queries(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.queries as f64).collect()
    }

    pub fn auc_ari(&self) -> f64 {
        auc(&self.queries(), &self.rows.iter().map(|r| r.ari).collect::<Vec<_>>())
    }

    pub fn auc_ami(&self) -> f64 {
        auc(&self.queries(), &self.rows.iter().map(|r| r.ami).collect::<Vec<_>>())
    }

    pub fn total_requeried(&self) -> usize {
        self.rows.iter().map(|r| r.requeried).sum()
    }

    pub fn degraded_iterations(&self) -> usize {
        self.rows.iter().filter(|r| r.degraded).count()
    }

    pub fn final_ari(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.ari)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&serde_json::to_string(r).expect("row serialises"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let rows: Vec<IterationRow> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        let first = rows.first().ok_or_else(|| Error::Parse("empty run log".into()))?;
        let (seed, hash, acq) = (first.seed, first.config_hash.clone(), first.acq);
        if rows.iter().any(|r| r.seed != seed || r.config_hash != hash || r.acq != acq) {
            return Err(Error::Parse("run log mixes seeds or configurations".into()));
        }
        Ok(RunRecord {
            seed,
            config_hash: hash,
            acq,
            rows,
            ig_non_converged: 0,
        })
    }
}

/// Initial similarity store for `(cfg, seed)`.
pub fn init_store(cfg: &RunConfig, problem: &Problem, seed: u64) -> Result<SimilarityStore> {
    let truth = &problem.truth;
    let mut rng = stream_rng(seed, Stream::Init, 0);
    let mut noisy_oracle = cfg.init_noisy.then(|| {
        NoisyOracle::new(
            truth.clone(),
            NoiseModel::new(cfg.gamma).expect("validated gamma"),
            stream_rng(seed, Stream::Init, 1),
        )
    });
    match cfg.init {
        InitKind::RandomSubset => {
            if cfg.init_fraction == 0.0 {
                return SimilarityStore::new(truth.n());
            }
            init_random_subset(truth, cfg.init_fraction, &mut rng, noisy_oracle.as_mut())
        }
        InitKind::Kmeans => {
            let features = problem
                .features
                .as_ref()
                .ok_or_else(|| Error::param("k-means initialisation needs features"))?;
            let k = cfg.kmeans_k.unwrap_or(cfg.k);
            let mut km_rng = stream_rng(seed, Stream::Kmeans, 0);
            let c0 = lloyd_kmeans(features, k, cfg.kmeans_iters, &mut km_rng)?;
            let mut store = init_from_clustering(&c0, cfg.init_magnitude)?;
            if cfg.init_fraction > 0.0 {
                inject_subset(&mut store, truth, cfg.init_fraction, &mut rng, noisy_oracle.as_mut())?;
            }
            Ok(store)
        }
    }
}

/// The simulated oracle used by [`run_active_loop`] for `seed`.
pub fn run_oracle(cfg: &RunConfig, problem: &Problem, seed: u64) -> Result<NoisyOracle> {
    Ok(NoisyOracle::new(
        problem.truth.clone(),
        NoiseModel::new(cfg.gamma)?,
        stream_rng(seed, Stream::Oracle, 0),
    ))
}

/// Runs the full loop for one seed against a simulated oracle.
pub fn run_active_loop(cfg: &RunConfig, problem: &Problem, seed: u64) -> Result<RunRecord> {
    cfg.validate()?;
    let n = problem.n();
    let settings = cfg.loop_settings(n)?;
    let truth = problem.truth.clustering();
    let hash = cfg.config_hash();
    let mut oracle = run_oracle(cfg, problem, seed)?;
    let (mut lp, ms) = ActiveLoop::new(settings, init_store(cfg, problem, seed)?, seed)?;
    let row = |lp: &ActiveLoop, requeried, ms_cluster, ms_acq, degraded| -> Result<IterationRow> {
        Ok(IterationRow {
            iter: lp.iteration(),
            queries: lp.total_queries(),
            ari: ari(lp.clustering(), &truth)?,
            ami: ami(lp.clustering(), &truth)?,
            k: lp.clustering().k(),
            requeried,
            ms_cluster,
            ms_acq,
            degraded,
            acq: cfg.acq,
            seed,
            config_hash: hash.clone(),
        })
    };
    let mut rows = vec![row(&lp, 0, ms, 0.0, false)?];
    let mut ig_non_converged = 0;
    for _ in 0..cfg.iterations {
        let proposal = lp.propose()?;
        for &p in &proposal.pairs {
            let answer = oracle.answer(p)?;
            lp.record(p, answer)?;
        }
        let (ms_cluster, requeried) = lp.finish_batch()?;
        ig_non_converged += proposal.info_gain.map_or(0, |r| r.non_converged);
        rows.push(row(&lp, requeried, ms_cluster, proposal.ms_acq, proposal.degraded)?);
    }
    Ok(RunRecord {
        seed,
        config_hash: hash,
        acq: cfg.acq,
        rows,
        ig_non_converged,
    })
}
