//! Model-uncertainty scores from a mean-field state: pairwise entropy and
//! information gain.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Gumbel};
use rayon::prelude::*;

use super::AcquisitionScores;
use crate::meanfield::{
    binary_entropy, factorial_entropy, mean_field_conditioned, prob_same_cluster, MeanFieldParams,
    MeanFieldState,
};
use crate::simcore::{num_pairs, pair_at, SimilarityMatrix};
use crate::{Error, Result};

/// Entropy of the pairwise relation under the factorial approximation.
///
/// With `power` set, each score becomes `log(H) + g` with `g` standard
/// Gumbel noise, which turns top-B selection into sampling proportional to
/// `H`. Pairs with zero entropy are then left unscored.
pub fn acq_entropy(state: &MeanFieldState, power: bool, rng: &mut impl Rng) -> AcquisitionScores {
    let n = state.n();
    let gumbel = Gumbel::new(0.0, 1.0).expect("valid parameters");
    let mut scores = Vec::with_capacity(num_pairs(n));
    for u in 0..n {
        for v in u + 1..n {
            let h = binary_entropy(prob_same_cluster(&state.q, u, v));
            scores.push(if power {
                let g: f64 = gumbel.sample(rng);
                if h > 0.0 {
                    h.ln() + g
                } else {
                    AcquisitionScores::UNSCORED
                }
            } else {
                h
            });
        }
    }
    AcquisitionScores::from_dense(n, scores).expect("sized by construction")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InfoGainReport {
    pub scored: usize,
    /// Conditioned mean-field runs that hit `max_iters`.
    pub non_converged: usize,
}

/// Negative expected posterior factorial entropy for a random subset of
/// `subset_size` pairs; all other pairs stay unscored.
///
/// For each sampled pair `(a, b)` the mean-field state is re-converged with
/// `S_ab` clamped to `+1` and to `-1`, starting from `base`.
pub fn acq_information_gain(
    sim: &SimilarityMatrix,
    base: &MeanFieldState,
    subset_size: usize,
    params: &MeanFieldParams,
    rng: &mut impl Rng,
) -> Result<(AcquisitionScores, InfoGainReport)> {
    let n = sim.n();
    let total = num_pairs(n);
    if subset_size == 0 || subset_size > total {
        return Err(Error::param(format!(
            "information-gain subset size {subset_size} must be in 1..={total}"
        )));
    }
    let mut chosen = sample(rng, total, subset_size).into_vec();
    chosen.sort_unstable();
    let params = MeanFieldParams {
        beta: base.beta,
        ..*params
    };
    let results: Vec<Result<(usize, f64, usize)>> = chosen
        .par_iter()
        .map(|&idx| {
            let p = pair_at(n, idx);
            let p_same = prob_same_cluster(&base.q, p.u(), p.v());
            let mut score = 0.0;
            let mut misses = 0;
            for (j, pj) in [(1.0, p_same), (-1.0, 1.0 - p_same)] {
                if pj <= 0.0 {
                    continue;
                }
                let st = mean_field_conditioned(sim, base, p.u(), p.v(), j, &params, |_| {})?;
                misses += usize::from(!st.converged);
                score -= pj * factorial_entropy(&st.q);
            }
            Ok((idx, score, misses))
        })
        .collect();
    let mut scores = AcquisitionScores::unscored(n);
    let mut report = InfoGainReport::default();
    for r in results {
        let (idx, score, misses) = r?;
        scores.set(pair_at(n, idx), score);
        report.scored += 1;
        report.non_converged += misses;
    }
    Ok((scores, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::{mean_field, mean_field_warm};
    use crate::rng::seeded;
    use crate::simcore::all_pairs;
    use crate::{Clustering, SimilarityStore};
    use proptest::prelude::*;

    fn example(s_uv: f64, s_uw: f64) -> MeanFieldState {
        let mut s = SimilarityStore::new(3).unwrap();
        s.record_query(0, 1, s_uv).unwrap();
        s.record_query(0, 2, s_uw).unwrap();
        let sim = s.matrix();
        let c = crate::clusterer::cluster(&sim, &Default::default()).unwrap();
        mean_field(&sim, &c, &MeanFieldParams::default()).unwrap()
    }

    #[test]
    fn example_one_attractive_vs_repulsive() {
        let attractive = acq_entropy(&example(1.0, 1.0), false, &mut seeded(0));
        let repulsive = acq_entropy(&example(-1.0, -1.0), false, &mut seeded(0));
        let vw = crate::Pair::new(1, 2).unwrap();
        let (a, r) = (attractive.get(vw).unwrap(), repulsive.get(vw).unwrap());
        assert!(a < r, "{a} vs {r}");
    }

    #[test]
    fn entropy_bounds_and_power() {
        let vals = [0.3, -0.5, 0.9, 0.0, -0.1, 0.4, 0.2, -0.9, 0.6, 0.1];
        let mut s = SimilarityStore::new(5).unwrap();
        for (p, &x) in all_pairs(5).zip(&vals) {
            s.record_query(p.u(), p.v(), x).unwrap();
        }
        let sim = s.matrix();
        let c = Clustering::from_labels(vec![0, 1, 0, 1, 2]).unwrap();
        let st = mean_field(&sim, &c, &MeanFieldParams { beta: 1.0, ..Default::default() }).unwrap();
        let plain = acq_entropy(&st, false, &mut seeded(0));
        assert_eq!(plain.num_scored(), 10);
        assert!(plain.as_slice().iter().all(|&h| (0.0..=2f64.ln() + 1e-15).contains(&h)));
        let power = acq_entropy(&st, true, &mut seeded(4));
        assert_eq!(power, acq_entropy(&st, true, &mut seeded(4)));
        assert_ne!(power, acq_entropy(&st, true, &mut seeded(5)));
    }

    #[test]
    fn one_hot_consistent_state_gives_zero_gain() {
        let labels = [0, 0, 1, 1, 1];
        let mut s = SimilarityStore::new(5).unwrap();
        for p in all_pairs(5) {
            s.record_query(p.u(), p.v(), if labels[p.u()] == labels[p.v()] { 1.0 } else { -1.0 })
                .unwrap();
        }
        let sim = s.matrix();
        let c = Clustering::from_labels(labels.to_vec()).unwrap();
        let st = mean_field(&sim, &c, &MeanFieldParams { beta: 50.0, ..Default::default() }).unwrap();
        let (scores, report) =
            acq_information_gain(&sim, &st, 10, &MeanFieldParams::default(), &mut seeded(0)).unwrap();
        assert_eq!(report.scored, 10);
        assert!(scores.as_slice().iter().all(|&x| x.abs() < 1e-12));
        let plain = acq_entropy(&st, false, &mut seeded(0));
        assert!(plain.as_slice().iter().all(|&x| x.abs() < 1e-12));
        let exact = MeanFieldState {
            q: st.q.mapv(f64::round),
            ..st
        };
        assert_eq!(acq_entropy(&exact, true, &mut seeded(0)).num_scored(), 0);
    }

    #[test]
    fn subset_bounds() {
        let sim = SimilarityStore::new(4).unwrap().matrix();
        let st = mean_field(&sim, &Clustering::single(4), &MeanFieldParams::default()).unwrap();
        let p = MeanFieldParams::default();
        assert!(acq_information_gain(&sim, &st, 0, &p, &mut seeded(0)).is_err());
        assert!(acq_information_gain(&sim, &st, 7, &p, &mut seeded(0)).is_err());
        let (s, _) = acq_information_gain(&sim, &st, 3, &p, &mut seeded(0)).unwrap();
        assert_eq!(s.num_scored(), 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn gain_matches_from_scratch(vals in prop::collection::vec(-1.0f64..1.0, 15), seed: u64) {
            let mut s = SimilarityStore::new(6).unwrap();
            for (p, &x) in all_pairs(6).zip(&vals) {
                s.record_query(p.u(), p.v(), x).unwrap();
            }
            let sim = s.matrix();
            let params = MeanFieldParams { beta: 1.0, ..Default::default() };
            let c = Clustering::from_labels(vec![0, 1, 0, 1, 1, 0]).unwrap();
            let base = mean_field(&sim, &c, &params).unwrap();
            let (scores, _) = acq_information_gain(&sim, &base, 15, &params, &mut seeded(seed)).unwrap();
            for (p, score) in scores.scored() {
                let p_same = prob_same_cluster(&base.q, p.u(), p.v());
                let mut reference = 0.0;
                for (j, pj) in [(1.0, p_same), (-1.0, 1.0 - p_same)] {
                    let modified = sim.with_override(p.u(), p.v(), j);
                    let st = mean_field_warm(&modified, &base, &params, |_| {}).unwrap();
                    reference -= pj * factorial_entropy(&st.q);
                }
                prop_assert!((score - reference).abs() < 1e-8);
                prop_assert!(score <= 0.0);
            }
        }
    }
}
