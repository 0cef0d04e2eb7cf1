//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints one PASS/FAIL line even when all of them pass.

use std::time::Instant;

use acc_core::acquisition::{
    acq_information_gain, triple_costs, triple_min_cost, Strategy, TRIPLE_CLUSTERINGS,
};
use acc_core::clusterer::cluster;
use acc_core::engine::{run_suite, InitKind, RunConfig, RunRecord};
use acc_core::meanfield::{
    binary_entropy, factorial_entropy, fixed_point_residual, mean_field, mean_field_conditioned,
    mean_field_warm, prob_same_cluster, MeanFieldParams, Schedule,
};
use acc_core::metrics::{brute_gibbs, brute_min_cost, enumerate_partitions, mean_std, sign_test_greater};
use acc_core::oracle::{GroundTruth, NoiseModel, NoisyOracle};
use acc_core::rng::seeded;
use acc_core::simcore::{all_pairs, cost_r, num_pairs};
use acc_core::{Clustering, Pair, SimilarityMatrix, SimilarityStore};
use ndarray::Array2;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_sim(n: usize, rng: &mut impl Rng) -> SimilarityMatrix {
    let mut s = SimilarityStore::new(n).unwrap();
    for p in all_pairs(n) {
        s.record_query(p.u(), p.v(), rng.random_range(-1.0..=1.0)).unwrap();
    }
    s.matrix()
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn cost_equivalence() -> Outcome {
    let mut rng = seeded(101);
    let (mut agree, mut worst_spread) = (0, 0.0f64);
    for i in 0..200 {
        let n = 4 + i % 4;
        let sim = random_sim(n, &mut rng);
        let report = brute_min_cost(&sim).unwrap();
        agree += usize::from(report.argmins_agree());
        worst_spread = worst_spread.max(report.offset_range.1 - report.offset_range.0);
    }
    outcome(
        agree == 200 && worst_spread <= 1e-10,
        format!("argmin sets identical in {agree}/200 stores, max R-Delta spread {worst_spread:.2e}"),
    )
}

fn triple_ground_truth() -> Outcome {
    let sim = SimilarityMatrix::from_dense(&[
        vec![0.0, 1.0, 1.0],
        vec![1.0, 0.0, -1.0],
        vec![1.0, -1.0, 0.0],
    ]);
    let partitions = enumerate_partitions(3);
    let costs: Vec<f64> = partitions.iter().map(|c| cost_r(&sim, c)).collect();
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let at_min = costs.iter().filter(|&&c| c == min).count();
    let closed = triple_costs(1.0, 1.0, -1.0);
    let via_clusterings: Vec<f64> = TRIPLE_CLUSTERINGS
        .iter()
        .map(|l| cost_r(&sim, &Clustering::from_labels(l.to_vec()).unwrap()))
        .collect();
    let score = triple_min_cost(&closed);
    let pass = partitions.len() == 5
        && min == 1.0
        && at_min == 3
        && closed.to_vec() == via_clusterings
        && score == 1.0 / 3.0;
    outcome(
        pass,
        format!("5 clusterings, min cost {min}, {at_min} minimisers, maxmin score {score}"),
    )
}

fn maxmin_closed_form() -> Outcome {
    let mut rng = seeded(202);
    let (mut checked, mut worst) = (0, 0.0f64);
    while checked < 10_000 {
        let s: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
        let negatives = s.iter().filter(|&&x| x < 0.0).count();
        if negatives != 1 {
            continue;
        }
        let min_cost = triple_costs(s[0], s[1], s[2]).iter().copied().fold(f64::INFINITY, f64::min);
        let min_abs = s.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
        worst = worst.max((min_cost - min_abs).abs());
        checked += 1;
    }
    outcome(worst <= 1e-12, format!("{checked} violating triples, max deviation {worst:.2e}"))
}

fn mean_field_fixed_point() -> Outcome {
    let mut rng = seeded(303);
    let (mut worst_res, mut worst_p) = (0.0f64, 0.0f64);
    let mut converged = 0;
    for i in 0..100 {
        let beta = [0.5, 1.0, 3.0][i % 3];
        let sim = random_sim(6, &mut rng);
        let mut labels: Vec<usize> = (0..6).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let c = Clustering::from_labels(labels).unwrap();
        let params = MeanFieldParams { beta, ..Default::default() };
        let st = mean_field(&sim, &c, &params).unwrap();
        converged += usize::from(st.converged);
        worst_res = worst_res.max(fixed_point_residual(&sim, &st.q, beta));
        for u in 0..6 {
            for v in u + 1..6 {
                let mut p = 0.0;
                for idx in 0..64usize {
                    let l: Vec<usize> = (0..6).map(|w| (idx >> w) & 1).collect();
                    if l[u] == l[v] {
                        p += (0..6).map(|w| st.q[[w, l[w]]]).product::<f64>();
                    }
                }
                worst_p = worst_p.max((prob_same_cluster(&st.q, u, v) - p).abs());
            }
        }
    }
    outcome(
        worst_res < 1e-3 && worst_p <= 1e-10,
        format!("{converged}/100 converged, max residual {worst_res:.2e}, max p(same) error {worst_p:.2e}"),
    )
}

fn conditioned_equivalence() -> Outcome {
    let mut rng = seeded(404);
    let (mut worst_h, mut worst_ig, mut traces) = (0.0f64, 0.0f64, 0usize);
    let (mut length_mismatch, mut sequential) = (0, 0);
    for _ in 0..100 {
        let n = rng.random_range(4..=7);
        let sim = random_sim(n, &mut rng);
        let k = rng.random_range(2..=3);
        let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        labels[..k].iter_mut().enumerate().for_each(|(i, l)| *l = i);
        let c = Clustering::from_labels(labels).unwrap();
        let params = MeanFieldParams {
            beta: rng.random_range(0.5..3.0),
            ..Default::default()
        };
        let base = mean_field(&sim, &c, &params).unwrap();
        sequential += usize::from(base.schedule == Schedule::Sequential);
        let a = rng.random_range(0..n);
        let b = (a + rng.random_range(1..n)) % n;
        let j = if rng.random::<bool>() { 1.0 } else { -1.0 };

        let mut fast = Vec::new();
        let cond = mean_field_conditioned(&sim, &base, a, b, j, &params, |h| fast.push(h.clone())).unwrap();
        let modified = sim.with_override(a, b, j);
        let mut slow = Vec::new();
        let reference = mean_field_warm(&modified, &base, &params, |h| slow.push(h.clone())).unwrap();
        length_mismatch += usize::from(fast.len() != slow.len() || fast.is_empty());
        for (x, y) in fast.iter().zip(&slow) {
            worst_h = worst_h.max(max_abs_diff(x, y));
        }
        worst_h = worst_h.max(max_abs_diff(&cond.q, &reference.q));
        traces += fast.len();

        // Information gain of every pair against a from-scratch reference.
        let total = num_pairs(n);
        let (scores, _) = acq_information_gain(&sim, &base, total, &params, &mut seeded(1)).unwrap();
        for p in all_pairs(n) {
            let p_same = prob_same_cluster(&base.q, p.u(), p.v());
            let mut expected = 0.0;
            for (j, pj) in [(1.0, p_same), (-1.0, 1.0 - p_same)] {
                if pj <= 0.0 {
                    continue;
                }
                let m = sim.with_override(p.u(), p.v(), j);
                let st = mean_field_warm(&m, &base, &params, |_| {}).unwrap();
                expected -= pj * factorial_entropy(&st.q);
            }
            worst_ig = worst_ig.max((scores.get(p).unwrap() - expected).abs());
        }
    }
    outcome(
        length_mismatch == 0 && worst_h <= 1e-12 && worst_ig <= 1e-8,
        format!(
            "100 cases ({sequential} sequential), {traces} iterations compared, max h diff {worst_h:.2e}, max IG diff {worst_ig:.2e}"
        ),
    )
}

fn kl_sanity() -> Outcome {
    let mut rng = seeded(505);
    let (mut ok, mut bad_value) = (0, 0);
    for i in 0..100 {
        let n = 4 + i % 3;
        let k = 2 + i % 2;
        let sim = random_sim(n, &mut rng);
        let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        labels[..k].iter_mut().enumerate().for_each(|(i, l)| *l = i);
        let c = Clustering::from_labels(labels).unwrap();
        let beta = [0.5, 1.0, 3.0][i % 3];
        // Near the uniform fixed point convergence is slow, and the default
        // stopping rule leaves q off by more than the comparison margin.
        let params = MeanFieldParams { beta, tol: 1e-10, max_iters: 100_000, ..Default::default() };
        let st = mean_field(&sim, &c, &params).unwrap();
        let gibbs = brute_gibbs(&sim, k, beta).unwrap();
        let kl = gibbs.kl_from_factorial(&st.q);
        let uniform = gibbs.kl_from_factorial(&Array2::from_elem((n, k), 1.0 / k as f64));
        if !(kl.is_finite() && kl >= -1e-12) {
            bad_value += 1;
        } else if kl <= uniform + 1e-12 {
            ok += 1;
        }
    }
    outcome(
        bad_value == 0 && ok >= 95,
        format!("KL(Q||P) <= KL(uniform||P) in {ok}/100 cases, {bad_value} negative or non-finite"),
    )
}

fn example_one() -> Outcome {
    let edge_entropy = |s: f64| {
        let mut store = SimilarityStore::new(3).unwrap();
        store.record_query(0, 1, s).unwrap();
        store.record_query(0, 2, s).unwrap();
        let sim = store.matrix();
        let c = cluster(&sim, &Default::default()).unwrap();
        let st = mean_field(&sim, &c, &MeanFieldParams { beta: 3.0, ..Default::default() }).unwrap();
        binary_entropy(prob_same_cluster(&st.q, 1, 2))
    };
    let (attractive, repulsive) = (edge_entropy(1.0), edge_entropy(-1.0));
    let ln2 = 2f64.ln();
    outcome(
        attractive < 0.05 * ln2 && repulsive > 0.9 * ln2,
        format!("H(e_vw) attractive {attractive:.4}, repulsive {repulsive:.4} (ln 2 = {ln2:.4})"),
    )
}

fn noise_model() -> Outcome {
    let truth = GroundTruth::new(vec![0, 0, 1, 1]).unwrap();
    let mut oracle = NoisyOracle::new(truth.clone(), NoiseModel::new(0.4).unwrap(), seeded(606));
    let pairs: Vec<Pair> = all_pairs(4).collect();
    let (mut exact, mut noise) = (0usize, Vec::new());
    let draws = 100_000;
    for i in 0..draws {
        let p = pairs[i % pairs.len()];
        let a = oracle.answer(p).unwrap();
        if a == truth.similarity(p.u(), p.v()).unwrap() {
            exact += 1;
        } else {
            noise.push(a);
        }
    }
    let rate = exact as f64 / draws as f64;
    noise.sort_by(f64::total_cmp);
    let m = noise.len() as f64;
    let ks = noise
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = (x + 1.0) / 2.0;
            (cdf - i as f64 / m).abs().max(((i + 1) as f64 / m - cdf).abs())
        })
        .fold(0.0, f64::max);
    let critical = 1.628 / m.sqrt();
    outcome(
        (rate - 0.6).abs() <= 0.01 && ks < critical,
        format!("exact rate {rate:.4}, KS D = {ks:.5} vs 1% critical {critical:.5} on {} noise draws", noise.len()),
    )
}

const SEEDS: u64 = 15;
const GAMMAS: [f64; 3] = [0.2, 0.4, 0.6];
const MAIN: [Strategy; 3] = [Strategy::Uniform, Strategy::Entropy, Strategy::InfoGain];

fn desk_config(acq: Strategy, gamma: f64) -> RunConfig {
    RunConfig {
        n: 100,
        k: 10,
        d: 10,
        acq,
        gamma,
        iterations: 30,
        // 10N scored pairs per iteration.
        subset_size: Some(1000),
        seeds: (0..SEEDS).collect(),
        ..RunConfig::default()
    }
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Per-seed records, indexed `[gamma][strategy]`.
struct Sweep {
    runs: Vec<Vec<Vec<RunRecord>>>,
}

impl Sweep {
    fn run() -> Sweep {
        let cfgs: Vec<RunConfig> = GAMMAS
            .iter()
            .flat_map(|&g| MAIN.iter().map(move |&a| desk_config(a, g)))
            .collect();
        let suite = run_suite(&cfgs, jobs(), None).unwrap();
        assert_eq!(suite.failures().count(), 0);
        let mut runs = vec![vec![Vec::new(); MAIN.len()]; GAMMAS.len()];
        for (i, _) in cfgs.iter().enumerate() {
            runs[i / MAIN.len()][i % MAIN.len()] = suite.records(i).into_iter().cloned().collect();
        }
        Sweep { runs }
    }

    fn aucs(&self, g: usize, s: usize) -> Vec<f64> {
        self.runs[g][s].iter().map(RunRecord::auc_ari).collect()
    }

    fn mean(&self, g: usize, s: usize) -> f64 {
        mean_std(&self.aucs(g, s)).0
    }
}

fn ordering(sweep: &Sweep) -> Outcome {
    let g = 1;
    let (u, e, ig) = (sweep.mean(g, 0), sweep.mean(g, 1), sweep.mean(g, 2));
    let (wins, trials, p) = sign_test_greater(&sweep.aucs(g, 1), &sweep.aucs(g, 0));
    outcome(
        ig >= e && e > u && p < 0.05,
        format!(
            "mean AUC info-gain {ig:.1}, entropy {e:.1}, uniform {u:.1}; entropy beats uniform {wins}/{trials}, sign test p = {p:.2e}"
        ),
    )
}

fn noise_trend(sweep: &Sweep) -> Outcome {
    let mut violations = 0;
    let mut means = Vec::new();
    for s in 0..MAIN.len() {
        let m: Vec<f64> = (0..GAMMAS.len()).map(|g| sweep.mean(g, s)).collect();
        violations += m.windows(2).filter(|w| w[1] > w[0]).count();
        means.push(format!(
            "{} {}",
            MAIN[s],
            m.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join("/")
        ));
    }
    let gap = |g: usize| -> Vec<f64> {
        sweep.aucs(g, 2).iter().zip(sweep.aucs(g, 0)).map(|(i, u)| i - u).collect()
    };
    let (low, high) = (gap(0), gap(2));
    let wider = low.iter().zip(&high).filter(|(l, h)| h >= l).count();
    outcome(
        violations <= 1 && wider >= 10,
        format!(
            "mean AUC by gamma {}; {violations} monotonicity violations; gap(0.6) >= gap(0.2) in {wider}/15 seeds",
            means.join(", ")
        ),
    )
}

fn requery_accounting(sweep: &Sweep) -> Outcome {
    let g = 1;
    let total = num_pairs(100) as u64;
    let uniform_clean = sweep.runs[g][0]
        .iter()
        .flat_map(|r| &r.rows)
        .filter(|row| row.queries <= total)
        .all(|row| row.requeried == 0);
    let count = |s: usize| sweep.runs[g][s].iter().filter(|r| r.total_requeried() >= 1).count();
    let (e, ig) = (count(1), count(2));
    outcome(
        uniform_clean && e >= 10 && ig >= 10,
        format!(
            "uniform re-queries before exhaustion: {}; seeds with >= 1 re-query: entropy {e}/15, info-gain {ig}/15",
            if uniform_clean { "none" } else { "some" }
        ),
    )
}

fn kmeans_variant() -> Outcome {
    let cfgs: Vec<RunConfig> = Strategy::ALL
        .iter()
        .map(|&acq| RunConfig {
            init: InitKind::Kmeans,
            kmeans_k: Some(10),
            init_magnitude: 0.01,
            init_fraction: 0.01,
            ..desk_config(acq, 0.4)
        })
        .collect();
    let suite = run_suite(&cfgs, jobs(), None).unwrap();
    let failures = suite.failures().count();
    let mean = |acq: Strategy| {
        let i = Strategy::ALL.iter().position(|&a| a == acq).unwrap();
        mean_std(&suite.records(i).iter().map(|r| r.auc_ari()).collect::<Vec<_>>()).0
    };
    let means: Vec<String> = Strategy::ALL.iter().map(|&a| format!("{a} {:.1}", mean(a))).collect();
    outcome(
        failures == 0 && mean(Strategy::InfoGain) >= mean(Strategy::Uniform),
        format!("{failures} failed runs; mean AUC {}", means.join(", ")),
    )
}

fn main() {
    // `cargo test -- --list` and filters are not meaningful here.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failed = 0;
    let mut report = |name: &str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        println!("{} {name}: {} [{secs:.1}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    };
    report("cost equivalence R vs Delta", &cost_equivalence);
    report("triple ground truth", &triple_ground_truth);
    report("maxmin closed form", &maxmin_closed_form);
    report("mean-field fixed point", &mean_field_fixed_point);
    report("conditioned update equivalence", &conditioned_equivalence);
    report("KL sanity", &kl_sanity);
    report("attractive vs repulsive edge entropy", &example_one);
    report("noise model", &noise_model);
    // Set to skip the slow end-to-end checks while iterating on the fast ones.
    if std::env::var_os("ACC_ACCEPTANCE_FAST").is_some() {
        for name in ["desk-scale strategy ordering", "noise-sensitivity trend", "re-query accounting", "k-means initialisation"] {
            println!("SKIP {name}");
        }
    } else {
        slow_checks(&mut report);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn slow_checks(report: &mut impl FnMut(&str, &dyn Fn() -> Outcome)) {
    let start = Instant::now();
    let sweep = Sweep::run();
    println!("(desk-scale sweep: {} runs in {:.0}s)", GAMMAS.len() * MAIN.len() * SEEDS as usize, start.elapsed().as_secs_f64());
    report("desk-scale strategy ordering", &|| ordering(&sweep));
    report("noise-sensitivity trend", &|| noise_trend(&sweep));
    report("re-query accounting", &|| requery_accounting(&sweep));
    report("k-means initialisation", &kmeans_variant);
}
