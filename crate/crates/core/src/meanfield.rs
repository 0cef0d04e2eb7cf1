//! Mean-field approximation of the Gibbs distribution
//! `P(c) ∝ exp(-β Δ(c | S))` by a factorial `Q(c) = Π_u q[u, c_u]`.
//!
//! Updates are synchronous: every iteration recomputes all mean-fields
//! `h = -S q` from the previous assignment probabilities and then applies a
//! row-wise softmax of `-β h`. Synchronous updates can lock into a 2-cycle
//! where groups of objects swap clusters back and forth. When that happens
//! and `sequential_fallback` is set, the run is repeated from the same start
//! with one object updated at a time, which never increases the mean-field
//! free energy and therefore settles.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::simcore::SimilarityMatrix;
use crate::{Clustering, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldParams {
    pub beta: f64,
    pub tol: f64,
    pub max_iters: usize,
    #[serde(default = "yes")]
    pub sequential_fallback: bool,
}

fn yes() -> bool {
    true
}

impl Default for MeanFieldParams {
    fn default() -> Self {
        MeanFieldParams {
            beta: 3.0,
            tol: 1e-4,
            max_iters: 200,
            sequential_fallback: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    Synchronous,
    Sequential,
}

impl MeanFieldParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::param(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MeanFieldState {
    /// `n × k` assignment probabilities; rows sum to one.
    pub q: Array2<f64>,
    /// `n × k` mean-fields matching the last E-step.
    pub h: Array2<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Update schedule that produced `q`.
    pub schedule: Schedule,
}

impl MeanFieldState {
    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn k(&self) -> usize {
        self.q.ncols()
    }
}

/// `h = -S q` with the diagonal excluded (it is never stored).
pub fn mean_fields(sim: &SimilarityMatrix, q: &Array2<f64>) -> Array2<f64> {
    let (n, k) = q.dim();
    let mut h = Array2::zeros((n, k));
    let qs = q.as_slice().expect("standard layout");
    let hs = h.as_slice_mut().expect("standard layout");
    for u in 0..n {
        let (cols, vals) = sim.row_slices(u);
        let hu = &mut hs[u * k..(u + 1) * k];
        for (&v, &s) in cols.iter().zip(vals) {
            let qv = &qs[v * k..(v + 1) * k];
            for (hk, &qk) in hu.iter_mut().zip(qv) {
                *hk -= s * qk;
            }
        }
    }
    h
}

/// Mean-fields of object `u` alone, written into `out`.
fn row_fields(sim: &SimilarityMatrix, q: &Array2<f64>, u: usize, out: &mut [f64]) {
    let k = q.ncols();
    let qs = q.as_slice().expect("standard layout");
    out.fill(0.0);
    let (cols, vals) = sim.row_slices(u);
    for (&v, &s) in cols.iter().zip(vals) {
        for (hk, &qk) in out.iter_mut().zip(&qs[v * k..(v + 1) * k]) {
            *hk -= s * qk;
        }
    }
}

fn softmax_in_place(row: &mut [f64], beta: f64) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(-beta * x));
    let mut z = 0.0;
    for x in row.iter_mut() {
        *x = (-beta * *x - max).exp();
        z += *x;
    }
    row.iter_mut().for_each(|x| *x /= z);
}

/// Row-wise `softmax(-β h)` with per-row max subtraction.
pub fn softmax_rows(h: &Array2<f64>, beta: f64) -> Array2<f64> {
    let mut q = h.mapv(|x| -beta * x);
    for mut row in q.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let z = row.sum();
        row.mapv_inplace(|x| x / z);
    }
    q
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

/// Initial mean-fields from a hard clustering: `h_uk = -Σ_{v: c_v = k} S_uv`.
pub fn initial_fields(sim: &SimilarityMatrix, c: &Clustering) -> Array2<f64> {
    let n = sim.n();
    let mut h = Array2::zeros((n, c.k()));
    for u in 0..n {
        for (v, s) in sim.row(u) {
            h[[u, c.label(v)]] -= s;
        }
    }
    h
}

fn iterate(
    q0: Array2<f64>,
    h0: Array2<f64>,
    params: &MeanFieldParams,
    mut m_step: impl FnMut(&Array2<f64>) -> Array2<f64>,
    mut observe: impl FnMut(&Array2<f64>),
) -> MeanFieldState {
    let mut q = q0;
    let mut h = h0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iters {
        h = m_step(&q);
        observe(&h);
        let next = softmax_rows(&h, params.beta);
        iterations += 1;
        let change = max_abs_diff(&next, &q);
        q = next;
        if change < params.tol {
            converged = true;
            break;
        }
    }
    MeanFieldState {
        q,
        h,
        beta: params.beta,
        iterations,
        converged,
        schedule: Schedule::Synchronous,
    }
}

/// One-object-at-a-time updates in index order. `fields(u, q, out)` writes
/// the mean-fields of `u` under the current `q`. `observe` sees, once per
/// sweep, the fields each row was updated from.
fn iterate_sequential(
    q0: Array2<f64>,
    params: &MeanFieldParams,
    fields: impl Fn(usize, &Array2<f64>, &mut [f64]),
    m_step: impl FnOnce(&Array2<f64>) -> Array2<f64>,
    mut observe: impl FnMut(&Array2<f64>),
) -> MeanFieldState {
    let (n, k) = q0.dim();
    let mut q = q0;
    let mut swept = Array2::zeros((n, k));
    let mut buf = vec![0.0; k];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iters {
        iterations += 1;
        let mut change: f64 = 0.0;
        for u in 0..n {
            fields(u, &q, &mut buf);
            swept.row_mut(u).iter_mut().zip(&buf).for_each(|(h, &x)| *h = x);
            softmax_in_place(&mut buf, params.beta);
            let mut row = q.row_mut(u);
            for (old, &new) in row.iter_mut().zip(&buf) {
                change = change.max((new - *old).abs());
                *old = new;
            }
        }
        observe(&swept);
        if change < params.tol {
            converged = true;
            break;
        }
    }
    let h = m_step(&q);
    MeanFieldState {
        q,
        h,
        beta: params.beta,
        iterations,
        converged,
        schedule: Schedule::Sequential,
    }
}

/// Synchronous iterations from `(q0, h0)`. On non-convergence with the
/// fallback enabled, restarts from `q0` one object at a time. A start that
/// already needed sequential updates skips the synchronous attempt.
fn run_schedule(
    q0: &Array2<f64>,
    h0: Array2<f64>,
    start: Schedule,
    params: &MeanFieldParams,
    fields: impl Fn(usize, &Array2<f64>, &mut [f64]),
    m_step: impl Fn(&Array2<f64>) -> Array2<f64>,
    mut observe: impl FnMut(&Array2<f64>),
) -> MeanFieldState {
    if start == Schedule::Sequential && params.sequential_fallback {
        return iterate_sequential(q0.clone(), params, fields, m_step, observe);
    }
    let sync = iterate(q0.clone(), h0, params, &m_step, &mut observe);
    if sync.converged || !params.sequential_fallback {
        return sync;
    }
    iterate_sequential(q0.clone(), params, fields, m_step, observe)
}

/// Mean-field iterations started from a hard clustering. `K` is taken from
/// `c_init`.
pub fn mean_field(
    sim: &SimilarityMatrix,
    c_init: &Clustering,
    params: &MeanFieldParams,
) -> Result<MeanFieldState> {
    params.validate()?;
    if c_init.n() != sim.n() {
        return Err(Error::ConfigMismatch(format!(
            "clustering has {} objects, similarity has {}",
            c_init.n(),
            sim.n()
        )));
    }
    let h0 = initial_fields(sim, c_init);
    let q0 = softmax_rows(&h0, params.beta);
    Ok(run_schedule(
        &q0,
        h0,
        Schedule::Synchronous,
        params,
        |u, q, out| row_fields(sim, q, u, out),
        |q| mean_fields(sim, q),
        |_| {},
    ))
}

fn check_q(sim: &SimilarityMatrix, q: &Array2<f64>) -> Result<()> {
    if q.nrows() != sim.n() || q.ncols() == 0 {
        return Err(Error::ConfigMismatch(format!(
            "q is {}x{}, similarity has {} objects",
            q.nrows(),
            q.ncols(),
            sim.n()
        )));
    }
    Ok(())
}

/// Mean-field iterations started from given assignment probabilities.
/// `observe` sees the mean-fields of every iteration.
pub fn mean_field_from_q(
    sim: &SimilarityMatrix,
    q0: &Array2<f64>,
    params: &MeanFieldParams,
    observe: impl FnMut(&Array2<f64>),
) -> Result<MeanFieldState> {
    params.validate()?;
    check_q(sim, q0)?;
    Ok(run_schedule(
        q0,
        Array2::zeros(q0.dim()),
        Schedule::Synchronous,
        params,
        |u, q, out| row_fields(sim, q, u, out),
        |q| mean_fields(sim, q),
        observe,
    ))
}

/// Mean-field iterations warm-started from `base`. A base that settled
/// under sequential updates continues sequentially.
pub fn mean_field_warm(
    sim: &SimilarityMatrix,
    base: &MeanFieldState,
    params: &MeanFieldParams,
    observe: impl FnMut(&Array2<f64>),
) -> Result<MeanFieldState> {
    params.validate()?;
    check_q(sim, &base.q)?;
    Ok(run_schedule(
        &base.q,
        base.h.clone(),
        base.schedule,
        params,
        |u, q, out| row_fields(sim, q, u, out),
        |q| mean_fields(sim, q),
        observe,
    ))
}

/// Mean-field iterations for the similarity with `S_ab` replaced by `j`,
/// started from `base` and computed as a rank-two correction of `-S q`
/// so the modified matrix is never built. Matches [`mean_field_warm`] on
/// the modified matrix iteration by iteration.
pub fn mean_field_conditioned(
    sim: &SimilarityMatrix,
    base: &MeanFieldState,
    a: usize,
    b: usize,
    j: f64,
    params: &MeanFieldParams,
    observe: impl FnMut(&Array2<f64>),
) -> Result<MeanFieldState> {
    params.validate()?;
    check_q(sim, &base.q)?;
    crate::Pair::checked(a, b, sim.n())?;
    let shift = sim.get(a, b) - j;
    let k = base.k();
    let m_step = |q: &Array2<f64>| {
        let mut h = mean_fields(sim, q);
        for l in 0..k {
            h[[a, l]] += q[[b, l]] * shift;
            h[[b, l]] += q[[a, l]] * shift;
        }
        h
    };
    let fields = |u: usize, q: &Array2<f64>, out: &mut [f64]| {
        row_fields(sim, q, u, out);
        if u == a {
            out.iter_mut().zip(q.row(b)).for_each(|(h, &qb)| *h += qb * shift);
        } else if u == b {
            out.iter_mut().zip(q.row(a)).for_each(|(h, &qa)| *h += qa * shift);
        }
    };
    // A base state that needed sequential updates is conditioned the same
    // way, so both outcomes of the pair are compared under one schedule.
    Ok(run_schedule(&base.q, base.h.clone(), base.schedule, params, fields, m_step, observe))
}

/// `p(c_u = c_v) = Σ_k q_uk q_vk`, clamped to `[0, 1]`.
pub fn prob_same_cluster(q: &Array2<f64>, u: usize, v: usize) -> f64 {
    q.row(u).dot(&q.row(v)).clamp(0.0, 1.0)
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Binary entropy of the pairwise relation with `p(same) = p` (nats).
pub fn binary_entropy(p: f64) -> f64 {
    0.0 - (plogp(p) + plogp(1.0 - p))
}

/// `Σ_u H(q_u)` in nats.
pub fn factorial_entropy(q: &Array2<f64>) -> f64 {
    0.0 - q.iter().map(|&p| plogp(p)).sum::<f64>()
}

/// Largest deviation of `q` from the fixed-point condition
/// `q = softmax(-β (-S q))`.
pub fn fixed_point_residual(sim: &SimilarityMatrix, q: &Array2<f64>, beta: f64) -> f64 {
    let h = mean_fields(sim, q);
    max_abs_diff(&softmax_rows(&h, beta), q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::brute_gibbs;
    use crate::SimilarityStore;
    use proptest::prelude::*;

    fn blocks(labels: &[usize]) -> SimilarityMatrix {
        let n = labels.len();
        let dense: Vec<Vec<f64>> = (0..n)
            .map(|u| {
                (0..n)
                    .map(|v| match (u == v, labels[u] == labels[v]) {
                        (true, _) => 0.0,
                        (false, true) => 1.0,
                        (false, false) => -1.0,
                    })
                    .collect()
            })
            .collect();
        SimilarityMatrix::from_dense(&dense)
    }

    fn dense(n: usize, vals: &[f64]) -> SimilarityMatrix {
        let mut d = vec![vec![0.0; n]; n];
        let mut it = vals.iter();
        for u in 0..n {
            for v in u + 1..n {
                let s = *it.next().unwrap();
                d[u][v] = s;
                d[v][u] = s;
            }
        }
        SimilarityMatrix::from_dense(&d)
    }

    #[test]
    fn consistent_blocks_one_hot() {
        let labels = vec![0, 0, 0, 1, 1, 1];
        let sim = blocks(&labels);
        let c = Clustering::from_labels(labels.clone()).unwrap();
        let st = mean_field(&sim, &c, &MeanFieldParams::default()).unwrap();
        assert!(st.converged);
        for (u, &l) in labels.iter().enumerate() {
            assert!((st.q[[u, l]] - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn zero_similarity_gives_uniform() {
        let sim = SimilarityStore::new(5).unwrap().matrix();
        let c = Clustering::from_labels(vec![0, 1, 2, 0, 1]).unwrap();
        let st = mean_field(&sim, &c, &MeanFieldParams::default()).unwrap();
        assert!(st.converged);
        assert_eq!(st.iterations, 1);
        assert!(st.h.iter().all(|&x| x == 0.0));
        assert!(st.q.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn large_beta_does_not_overflow() {
        let sim = blocks(&[0, 0, 1, 1, 1, 2, 2]);
        let c = Clustering::singletons(7);
        let p = MeanFieldParams { beta: 500.0, ..Default::default() };
        let st = mean_field(&sim, &c, &p).unwrap();
        assert!(st.q.iter().all(|x| x.is_finite()));
        for row in st.q.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_rows_entropy() {
        let q = Array2::from_elem((4, 3), 1.0 / 3.0);
        assert!((factorial_entropy(&q) - 4.0 * 3f64.ln()).abs() < 1e-12);
        assert!((prob_same_cluster(&Array2::from_elem((2, 4), 0.25), 0, 1) - 0.25).abs() < 1e-15);
        let mut one_hot = Array2::zeros((3, 2));
        one_hot[[0, 1]] = 1.0;
        one_hot[[1, 1]] = 1.0;
        one_hot[[2, 0]] = 1.0;
        assert_eq!(factorial_entropy(&one_hot), 0.0);
        assert_eq!(prob_same_cluster(&one_hot, 0, 1), 1.0);
        assert!((binary_entropy(0.5) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn conditioning_on_current_value_is_one_plain_step() {
        let sim = dense(4, &[0.3, -0.7, 0.1, 0.9, -0.2, 0.5]);
        let c = Clustering::from_labels(vec![0, 0, 1, 1]).unwrap();
        let p = MeanFieldParams { beta: 1.0, ..Default::default() };
        let base = mean_field(&sim, &c, &p).unwrap();
        let one = MeanFieldParams { max_iters: 1, sequential_fallback: false, ..p };
        let cond = mean_field_conditioned(&sim, &base, 0, 2, sim.get(0, 2), &one, |_| {}).unwrap();
        let plain = softmax_rows(&mean_fields(&sim, &base.q), 1.0);
        assert!(max_abs_diff(&cond.q, &plain) == 0.0);
    }

    #[test]
    fn sequential_base_conditions_sequentially() {
        let sim = dense(5, &[0.4, -0.9, 0.2, 0.7, -0.3, 0.8, -0.6, 0.1, 0.5, -0.2]);
        let c = Clustering::from_labels(vec![0, 1, 0, 1, 1]).unwrap();
        let p = MeanFieldParams { beta: 2.0, ..Default::default() };
        let mut base = mean_field(&sim, &c, &p).unwrap();
        base.schedule = Schedule::Sequential;
        let mut fast = Vec::new();
        let cond = mean_field_conditioned(&sim, &base, 1, 3, 1.0, &p, |h| fast.push(h.clone())).unwrap();
        let mut slow = Vec::new();
        let reference = mean_field_warm(&sim.with_override(1, 3, 1.0), &base, &p, |h| slow.push(h.clone())).unwrap();
        assert_eq!(cond.schedule, Schedule::Sequential);
        assert!(!fast.is_empty());
        assert_eq!(fast.len(), slow.len());
        for (x, y) in fast.iter().zip(&slow) {
            assert!(max_abs_diff(x, y) < 1e-12);
        }
        assert!(max_abs_diff(&cond.q, &reference.q) < 1e-12);
    }

    #[test]
    fn rejects_bad_params() {
        let sim = blocks(&[0, 1]);
        let c = Clustering::single(2);
        for p in [
            MeanFieldParams { beta: 0.0, ..Default::default() },
            MeanFieldParams { tol: 0.0, ..Default::default() },
            MeanFieldParams { max_iters: 0, ..Default::default() },
        ] {
            assert!(mean_field(&sim, &c, &p).is_err());
        }
        assert!(mean_field(&sim, &Clustering::single(3), &MeanFieldParams::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn rows_stochastic(vals in prop::collection::vec(-1.0f64..1.0, 15), beta in 0.1f64..10.0) {
            let sim = dense(6, &vals);
            let c = Clustering::from_labels(vec![0, 1, 2, 0, 1, 2]).unwrap();
            let st = mean_field(&sim, &c, &MeanFieldParams { beta, ..Default::default() }).unwrap();
            for row in st.q.rows() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-9);
                prop_assert!(row.iter().all(|&x| (0.0..=1.0).contains(&x)));
            }
        }

        #[test]
        fn converged_state_is_fixed_point(vals in prop::collection::vec(-1.0f64..1.0, 15)) {
            let sim = dense(6, &vals);
            let c = Clustering::from_labels(vec![0, 0, 0, 1, 1, 1]).unwrap();
            let p = MeanFieldParams { beta: 1.0, ..Default::default() };
            let st = mean_field(&sim, &c, &p).unwrap();
            prop_assume!(st.converged);
            prop_assert!(fixed_point_residual(&sim, &st.q, 1.0) < 10.0 * p.tol);
        }

        #[test]
        fn label_permutation_permutes_columns(vals in prop::collection::vec(-1.0f64..1.0, 10)) {
            let sim = dense(5, &vals);
            let p = MeanFieldParams { beta: 2.0, ..Default::default() };
            let a = mean_field(&sim, &Clustering::from_labels(vec![0, 1, 2, 0, 1]).unwrap(), &p).unwrap();
            // Labels 0 -> 2, 1 -> 0, 2 -> 1.
            let b = mean_field(&sim, &Clustering::from_labels(vec![2, 0, 1, 2, 0]).unwrap(), &p).unwrap();
            for u in 0..5 {
                for (l, m) in [(0, 2), (1, 0), (2, 1)] {
                    prop_assert!((a.q[[u, l]] - b.q[[u, m]]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn conditioned_matches_modified_store(
            vals in prop::collection::vec(-1.0f64..1.0, 10),
            a in 0usize..5, off in 1usize..5, positive: bool,
        ) {
            let b = (a + off) % 5;
            let j = if positive { 1.0 } else { -1.0 };
            let sim = dense(5, &vals);
            let c = Clustering::from_labels(vec![0, 1, 0, 1, 1]).unwrap();
            let p = MeanFieldParams { beta: 1.0, ..Default::default() };
            let base = mean_field(&sim, &c, &p).unwrap();
            let mut fast = Vec::new();
            let cond = mean_field_conditioned(&sim, &base, a, b, j, &p, |h| fast.push(h.clone())).unwrap();
            let modified = sim.with_override(a, b, j);
            let mut slow = Vec::new();
            let reference = mean_field_warm(&modified, &base, &p, |h| slow.push(h.clone())).unwrap();
            prop_assert_eq!(fast.len(), slow.len());
            for (x, y) in fast.iter().zip(&slow) {
                prop_assert!(max_abs_diff(x, y) < 1e-12);
            }
            prop_assert!(max_abs_diff(&cond.q, &reference.q) < 1e-12);
        }

        #[test]
        fn marginals_match_factorial_enumeration(
            vals in prop::collection::vec(-1.0f64..1.0, 15), u in 0usize..6, off in 1usize..6,
        ) {
            let v = (u + off) % 6;
            let sim = dense(6, &vals);
            let c = Clustering::from_labels(vec![0, 1, 0, 1, 0, 1]).unwrap();
            let st = mean_field(&sim, &c, &MeanFieldParams { beta: 1.0, ..Default::default() }).unwrap();
            // Enumerate Q directly.
            let mut p_same = 0.0;
            let mut entropy = 0.0;
            for idx in 0..64usize {
                let l: Vec<usize> = (0..6).map(|w| (idx >> w) & 1).collect();
                let qc: f64 = (0..6).map(|w| st.q[[w, l[w]]]).product();
                if l[u] == l[v] {
                    p_same += qc;
                }
                if qc > 0.0 {
                    entropy -= qc * qc.ln();
                }
            }
            prop_assert!((prob_same_cluster(&st.q, u, v) - p_same).abs() < 1e-10);
            prop_assert!((factorial_entropy(&st.q) - entropy).abs() < 1e-10);
        }

        #[test]
        fn kl_decomposition(vals in prop::collection::vec(-1.0f64..1.0, 10)) {
            let sim = dense(5, &vals);
            let beta = 1.5;
            let c = Clustering::from_labels(vec![0, 1, 2, 0, 1]).unwrap();
            let st = mean_field(&sim, &c, &MeanFieldParams { beta, ..Default::default() }).unwrap();
            let g = brute_gibbs(&sim, 3, beta).unwrap();
            let kl = g.kl_from_factorial(&st.q);
            let decomposed = beta * g.expected_delta(&st.q) - factorial_entropy(&st.q) - beta * g.free_energy();
            prop_assert!(kl >= -1e-12);
            prop_assert!((kl - decomposed).abs() < 1e-8);
        }
    }
}
