//! Local search for the max-correlation objective.
//!
//! Each sweep visits the objects in a seeded random order. For the visited
//! object the similarity mass towards every cluster is accumulated from its
//! sparse row, and the object is moved to the target (an existing cluster or
//! a fresh singleton) with the largest mass, provided that strictly lowers
//! the objective. A sweep costs O(nnz + N·K), i.e. O(K·N²) in the worst case.
//! Emptied clusters disappear and fresh singletons grow K, so the number of
//! clusters is found by the search itself.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::simcore::{cost_delta, Clustering, SimilarityMatrix};
use crate::{Error, Result};

/// Moves must improve the objective by more than this.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSearchConfig {
    pub max_sweeps: usize,
    pub warm_start: Option<Clustering>,
    pub seed: u64,
}

impl Default for LocalSearchConfig {
    fn default() -> Self {
        LocalSearchConfig {
            max_sweeps: 50,
            warm_start: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalSearchReport {
    pub clustering: Clustering,
    pub sweeps: usize,
    pub moves: usize,
    /// True when the last sweep made no move.
    pub converged: bool,
    /// Objective before the first sweep and after every sweep.
    pub delta_trace: Vec<f64>,
}

pub fn cluster(sim: &SimilarityMatrix, cfg: &LocalSearchConfig) -> Result<Clustering> {
    local_search(sim, cfg).map(|r| r.clustering)
}

pub fn local_search(sim: &SimilarityMatrix, cfg: &LocalSearchConfig) -> Result<LocalSearchReport> {
    let n = sim.n();
    if n < 2 {
        return Err(Error::param("local search needs at least 2 objects"));
    }
    if cfg.max_sweeps == 0 {
        return Err(Error::param("max_sweeps must be at least 1"));
    }
    let start = match &cfg.warm_start {
        Some(c) if c.n() != n => {
            return Err(Error::InvalidClustering(format!(
                "warm start has {} objects, similarity has {n}",
                c.n()
            )))
        }
        Some(c) => c.clone(),
        None => Clustering::singletons(n),
    };

    // Slots may become empty during the search; `free` recycles them.
    let mut labels = start.labels().to_vec();
    let mut sizes = start.sizes();
    let mut free: Vec<usize> = Vec::new();
    let mut mass = vec![0.0f64; n + 1];
    let mut touched: Vec<usize> = Vec::with_capacity(n);

    let mut rng = crate::rng::seeded(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut delta = cost_delta(sim, &start);
    let mut delta_trace = vec![delta];
    let mut moves = 0;
    let mut sweeps = 0;
    let mut converged = false;

    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        order.shuffle(&mut rng);
        let mut moved = false;
        for &u in &order {
            let (cols, vals) = sim.row_slices(u);
            for (&v, &s) in cols.iter().zip(vals) {
                let l = labels[v];
                if mass[l] == 0.0 {
                    touched.push(l);
                }
                mass[l] += s;
            }
            let current = labels[u];
            let current_mass = mass[current];

            // Largest mass over non-current targets. A fresh singleton has
            // mass 0 and wins ties; otherwise the lowest slot index wins.
            let mut best: Option<usize> = None;
            let mut best_mass = if sizes[current] > 1 { 0.0 } else { f64::NEG_INFINITY };
            for (l, &size) in sizes.iter().enumerate() {
                if l == current || size == 0 {
                    continue;
                }
                if mass[l] > best_mass {
                    best_mass = mass[l];
                    best = Some(l);
                }
            }

            // Moving u from `current` to the target changes the objective by
            // current_mass - best_mass.
            if best_mass > current_mass + MIN_GAIN {
                let target = match best {
                    Some(l) => l,
                    None => match free.pop() {
                        Some(l) => l,
                        None => {
                            sizes.push(0);
                            if mass.len() < sizes.len() {
                                mass.push(0.0);
                            }
                            sizes.len() - 1
                        }
                    },
                };
                sizes[current] -= 1;
                if sizes[current] == 0 {
                    free.push(current);
                }
                sizes[target] += 1;
                labels[u] = target;
                delta += current_mass - best_mass;
                moves += 1;
                moved = true;
            }

            for l in touched.drain(..) {
                mass[l] = 0.0;
            }
        }
        delta_trace.push(delta);
        if !moved {
            converged = true;
            break;
        }
    }

    let clustering = Clustering::from_labels(labels)?;
    // Recompute to shed accumulated rounding from the incremental updates.
    if let Some(last) = delta_trace.last_mut() {
        *last = cost_delta(sim, &clustering);
    }
    Ok(LocalSearchReport {
        clustering,
        sweeps,
        moves,
        converged,
        delta_trace,
    })
}

/// True when no single object can move to another existing cluster or to a
/// fresh singleton and strictly lower the objective.
pub fn is_one_move_optimal(sim: &SimilarityMatrix, c: &Clustering) -> bool {
    let sizes = c.sizes();
    (0..sim.n()).all(|u| {
        let mut mass = vec![0.0; c.k()];
        for (v, s) in sim.row(u) {
            mass[c.label(v)] += s;
        }
        let current = c.label(u);
        let fresh = if sizes[current] > 1 { 0.0 } else { f64::NEG_INFINITY };
        let best = mass
            .iter()
            .enumerate()
            .filter(|&(l, _)| l != current)
            .map(|(_, &m)| m)
            .fold(fresh, f64::max);
        best <= mass[current] + MIN_GAIN
    })
}
