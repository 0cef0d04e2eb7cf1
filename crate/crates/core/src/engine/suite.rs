use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::active::{run_active_loop, RunRecord};
use super::config::RunConfig;
use crate::acquisition::Strategy;
use crate::metrics::mean_std;
use crate::{Error, Result};

/// Mean and population std of the metrics at one iteration across runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub iter: usize,
    pub queries: u64,
    pub ari_mean: f64,
    pub ari_std: f64,
    pub ami_mean: f64,
    pub ami_std: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AucRow {
    pub config_hash: String,
    pub acq: Strategy,
    pub seed: u64,
    pub auc_ari: f64,
    pub auc_ami: f64,
    pub requeried: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub config_hash: String,
    pub acq: Strategy,
    pub rows: Vec<AggregateRow>,
    pub auc: Vec<AucRow>,
}

impl Aggregate {
    pub fn mean_auc_ari(&self) -> f64 {
        mean_std(&self.auc.iter().map(|a| a.auc_ari).collect::<Vec<_>>()).0
    }

    pub fn mean_auc_ami(&self) -> f64 {
        mean_std(&self.auc.iter().map(|a| a.auc_ami).collect::<Vec<_>>()).0
    }

    pub fn write_rows_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn write_auc_csv(&self, out: impl Write) -> Result<()> {
        write_auc_rows(self.auc.iter(), out)
    }
}

fn write_auc_rows<'a>(rows: impl Iterator<Item = &'a AucRow>, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Per-iteration mean ± std and per-run AUC. All records must come from the
/// same configuration and share the query schedule.
pub fn aggregate(records: &[RunRecord]) -> Result<Aggregate> {
    let first = records.first().ok_or_else(|| Error::param("no runs to aggregate"))?;
    if let Some(other) = records.iter().find(|r| r.config_hash != first.config_hash) {
        return Err(Error::ConfigMismatch(format!(
            "config hash {} differs from {}",
            other.config_hash, first.config_hash
        )));
    }
    let len = first.rows.len();
    if records.iter().any(|r| r.rows.len() != len) {
        return Err(Error::ConfigMismatch("runs have different iteration counts".into()));
    }
    let mut rows = Vec::with_capacity(len);
    for i in 0..len {
        let queries = first.rows[i].queries;
        if records.iter().any(|r| r.rows[i].queries != queries) {
            return Err(Error::ConfigMismatch(format!(
                "runs disagree on the query count at iteration {i}"
            )));
        }
        let ari: Vec<f64> = records.iter().map(|r| r.rows[i].ari).collect();
        let ami: Vec<f64> = records.iter().map(|r| r.rows[i].ami).collect();
        let (ari_mean, ari_std) = mean_std(&ari);
        let (ami_mean, ami_std) = mean_std(&ami);
        rows.push(AggregateRow {
            iter: first.rows[i].iter,
            queries,
            ari_mean,
            ari_std,
            ami_mean,
            ami_std,
            runs: records.len(),
        });
    }
    let auc = records
        .iter()
        .map(|r| AucRow {
            config_hash: r.config_hash.clone(),
            acq: r.acq,
            seed: r.seed,
            auc_ari: r.auc_ari(),
            auc_ami: r.auc_ami(),
            requeried: r.total_requeried(),
        })
        .collect();
    Ok(Aggregate {
        config_hash: first.config_hash.clone(),
        acq: first.acq,
        rows,
        auc,
    })
}

pub fn load_run(path: &Path) -> Result<RunRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunRecord::from_jsonl(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Outcome of one `(config, seed)` cell.
#[derive(Debug)]
pub struct CellResult {
    pub config_index: usize,
    pub seed: u64,
    pub outcome: std::result::Result<RunRecord, String>,
}

#[derive(Debug)]
pub struct SuiteResult {
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<Aggregate>,
    pub files: Vec<PathBuf>,
}

impl SuiteResult {
    pub fn failures(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.outcome.is_err())
    }

    /// Successful runs of config `index`, in seed order.
    pub fn records(&self, index: usize) -> Vec<&RunRecord> {
        self.cells
            .iter()
            .filter(|c| c.config_index == index)
            .filter_map(|c| c.outcome.as_ref().ok())
            .collect()
    }
}

pub fn run_file_name(record: &RunRecord) -> String {
    format!("{}-{}-seed{}.jsonl", record.acq, record.config_hash, record.seed)
}

/// Runs every `(config, seed)` cell on `jobs` worker threads. A failed run
/// is recorded and does not stop the others. With `out_dir`, writes one
/// JSON-lines file per run, `summary.csv` and `auc.csv`.
pub fn run_suite(cfgs: &[RunConfig], jobs: usize, out_dir: Option<&Path>) -> Result<SuiteResult> {
    if cfgs.is_empty() {
        return Err(Error::param("suite needs at least one configuration"));
    }
    for cfg in cfgs {
        cfg.validate()?;
    }
    let problems = cfgs
        .iter()
        .map(|c| c.load_problem())
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<(usize, u64)> = cfgs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::param(e.to_string()))?;
    let results: Vec<CellResult> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(i, seed)| CellResult {
                config_index: i,
                seed,
                outcome: run_active_loop(&cfgs[i], &problems[i], seed).map_err(|e| e.to_string()),
            })
            .collect()
    });
    let mut aggregates = Vec::new();
    for i in 0..cfgs.len() {
        let recs: Vec<RunRecord> = results
            .iter()
            .filter(|c| c.config_index == i)
            .filter_map(|c| c.outcome.as_ref().ok().cloned())
            .collect();
        if !recs.is_empty() {
            aggregates.push(aggregate(&recs)?);
        }
    }
    let mut files = Vec::new();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for rec in results.iter().filter_map(|c| c.outcome.as_ref().ok()) {
            let path = dir.join(run_file_name(rec));
            std::fs::write(&path, rec.to_jsonl()).map_err(|e| Error::io(&path, e))?;
            files.push(path);
        }
        let summary = dir.join("summary.csv");
        write_summary(&aggregates, &summary)?;
        files.push(summary);
        let auc_path = dir.join("auc.csv");
        let file = std::fs::File::create(&auc_path).map_err(|e| Error::io(&auc_path, e))?;
        write_auc_rows(aggregates.iter().flat_map(|a| a.auc.iter()), file)?;
        files.push(auc_path);
    }
    Ok(SuiteResult {
        cells: results,
        aggregates,
        files,
    })
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    config_hash: &'a str,
    acq: Strategy,
    iter: usize,
    queries: u64,
    ari_mean: f64,
    ari_std: f64,
    ami_mean: f64,
    ami_std: f64,
    runs: usize,
}

/// One CSV over several aggregates, keyed by config hash and strategy.
pub fn write_summary(aggregates: &[Aggregate], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for a in aggregates {
        for row in &a.rows {
            w.serialize(SummaryRow {
                config_hash: &a.config_hash,
                acq: a.acq,
                iter: row.iter,
                queries: row.queries,
                ari_mean: row.ari_mean,
                ari_std: row.ari_std,
                ami_mean: row.ami_mean,
                ami_std: row.ami_std,
                runs: row.runs,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
