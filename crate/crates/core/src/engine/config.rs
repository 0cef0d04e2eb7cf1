use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acquisition::{Strategy, TripleScan};
use crate::meanfield::MeanFieldParams;
use crate::oracle::{gen_synthetic, read_csv, GroundTruth};
use crate::simcore::num_pairs;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    /// Exact `S*` on a random fraction of the pairs, zero elsewhere.
    RandomSubset,
    /// `±init_magnitude` from a k-means clustering of the features, plus
    /// exact `S*` on a random fraction of the pairs.
    Kmeans,
}

/// Everything that defines a run except the seed. Keys are flat so the
/// document reads the same as TOML or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    /// Synthetic generator size; ignored for CSV input.
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub dataset_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_path: Option<PathBuf>,
    pub label_column: String,

    pub acq: Strategy,
    pub alpha: f64,
    pub beta: f64,
    pub beta_exp: f64,
    /// Pairs scored by information gain per iteration; `50·N` when unset,
    /// capped at the number of pairs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subset_size: Option<usize>,
    pub power_diversity: bool,

    pub gamma: f64,
    /// Absolute batch size; overrides `batch_fraction` when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    pub batch_fraction: f64,
    pub iterations: usize,

    pub init: InitKind,
    pub init_fraction: f64,
    pub init_magnitude: f64,
    pub init_noisy: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kmeans_k: Option<usize>,
    pub kmeans_iters: usize,

    pub mf_tol: f64,
    pub mf_max_iters: usize,
    /// Retry non-converged synchronous mean-field runs with sequential updates.
    pub mf_sequential_fallback: bool,
    pub max_sweeps: usize,
    pub triple_full_scan_limit: usize,
    pub triple_max_witnesses: usize,

    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mf = MeanFieldParams::default();
        let scan = TripleScan::default();
        RunConfig {
            dataset: DatasetKind::Synthetic,
            n: 500,
            k: 10,
            d: 10,
            dataset_seed: 0,
            data_path: None,
            label_column: "label".into(),
            acq: Strategy::InfoGain,
            alpha: 1.0,
            beta: mf.beta,
            beta_exp: 1.0,
            subset_size: None,
            power_diversity: true,
            gamma: 0.4,
            batch_size: None,
            batch_fraction: 0.01,
            iterations: 30,
            init: InitKind::RandomSubset,
            init_fraction: 0.01,
            init_magnitude: 0.01,
            init_noisy: false,
            kmeans_k: None,
            kmeans_iters: 100,
            mf_tol: mf.tol,
            mf_max_iters: mf.max_iters,
            mf_sequential_fallback: mf.sequential_fallback,
            max_sweeps: 50,
            triple_full_scan_limit: scan.full_scan_limit,
            triple_max_witnesses: scan.max_witnesses,
            seeds: (0..15).collect(),
            output: None,
        }
    }
}

/// Objects, ground truth and (when available) features.
#[derive(Debug, Clone)]
pub struct Problem {
    pub truth: GroundTruth,
    pub features: Option<Array2<f64>>,
}

impl Problem {
    pub fn from_truth(truth: GroundTruth) -> Self {
        Problem { truth, features: None }
    }

    pub fn n(&self) -> usize {
        self.truth.n()
    }
}

/// Per-iteration settings of the active loop, resolved for a concrete `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSettings {
    pub strategy: Strategy,
    pub batch_size: usize,
    pub alpha: f64,
    pub beta_exp: f64,
    pub power_diversity: bool,
    pub subset_size: usize,
    pub mean_field: MeanFieldParams,
    pub max_sweeps: usize,
    pub triple_scan: TripleScan,
}

impl LoopSettings {
    /// Defaults for `n` objects and the given strategy.
    pub fn new(strategy: Strategy, n: usize) -> Result<Self> {
        RunConfig {
            acq: strategy,
            ..RunConfig::default()
        }
        .loop_settings(n)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let total = num_pairs(n);
        if self.batch_size == 0 || self.batch_size > total {
            return Err(Error::param(format!(
                "batch size {} must be in 1..={total}",
                self.batch_size
            )));
        }
        if self.subset_size == 0 || self.subset_size > total {
            return Err(Error::param(format!(
                "subset size {} must be in 1..={total}",
                self.subset_size
            )));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::param("alpha must be nonnegative"));
        }
        if !(self.beta_exp > 0.0) {
            return Err(Error::param("beta_exp must be positive"));
        }
        if self.max_sweeps == 0 {
            return Err(Error::param("max_sweeps must be at least 1"));
        }
        self.mean_field.validate()
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Parses by extension: `.json` as JSON, anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)?
        } else {
            Self::from_toml(&text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hash of everything except the seed list and output location, so runs
    /// of one configuration share it.
    pub fn config_hash(&self) -> String {
        let canonical = RunConfig {
            seeds: Vec::new(),
            output: None,
            ..self.clone()
        };
        let json = serde_json::to_vec(&canonical).expect("config serialises");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset == DatasetKind::Synthetic && (self.n < 2 || self.k == 0 || self.k > self.n || self.d == 0) {
            return Err(Error::param(format!(
                "synthetic data needs n >= 2, 1 <= k <= n and d >= 1 (n = {}, k = {}, d = {})",
                self.n, self.k, self.d
            )));
        }
        if self.dataset == DatasetKind::Csv && self.data_path.is_none() {
            return Err(Error::param("csv dataset needs data_path"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::param(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.batch_fraction > 0.0 && self.batch_fraction <= 1.0) {
            return Err(Error::param("batch_fraction must lie in (0, 1]"));
        }
        if !(self.init_fraction >= 0.0 && self.init_fraction <= 1.0) {
            return Err(Error::param("init_fraction must lie in [0, 1]"));
        }
        if !(self.init_magnitude > 0.0 && self.init_magnitude <= 1.0) {
            return Err(Error::param("init_magnitude must lie in (0, 1]"));
        }
        if self.seeds.is_empty() {
            return Err(Error::param("at least one seed is required"));
        }
        if self.dataset == DatasetKind::Synthetic {
            self.loop_settings(self.n)?;
        }
        Ok(())
    }

    pub fn batch_size_for(&self, n: usize) -> usize {
        self.batch_size
            .unwrap_or_else(|| (num_pairs(n) as f64 * self.batch_fraction).ceil() as usize)
    }

    pub fn loop_settings(&self, n: usize) -> Result<LoopSettings> {
        let s = LoopSettings {
            strategy: self.acq,
            batch_size: self.batch_size_for(n),
            alpha: self.alpha,
            beta_exp: self.beta_exp,
            power_diversity: self.power_diversity,
            subset_size: self.subset_size.unwrap_or(50 * n).min(num_pairs(n)),
            mean_field: MeanFieldParams {
                beta: self.beta,
                tol: self.mf_tol,
                max_iters: self.mf_max_iters,
                sequential_fallback: self.mf_sequential_fallback,
            },
            max_sweeps: self.max_sweeps,
            triple_scan: TripleScan {
                full_scan_limit: self.triple_full_scan_limit,
                max_witnesses: self.triple_max_witnesses,
            },
        };
        s.validate(n)?;
        Ok(s)
    }

    pub fn load_problem(&self) -> Result<Problem> {
        match self.dataset {
            DatasetKind::Synthetic => {
                let ds = gen_synthetic(self.n, self.k, self.d, self.dataset_seed)?;
                Ok(Problem {
                    truth: ds.truth,
                    features: Some(ds.features),
                })
            }
            DatasetKind::Csv => {
                let path = self
                    .data_path
                    .as_ref()
                    .ok_or_else(|| Error::param("csv dataset needs data_path"))?;
                let ds = read_csv(path, &self.label_column)?;
                Ok(Problem {
                    truth: ds.truth,
                    features: Some(ds.features),
                })
            }
        }
    }
}
