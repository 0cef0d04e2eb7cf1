use statrs::function::gamma::ln_gamma;

use crate::simcore::Clustering;
use crate::{Error, Result};

/// Co-occurrence counts between two clusterings of the same objects.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<u64>>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub total: u64,
}

impl ContingencyTable {
    pub fn new(a: &Clustering, b: &Clustering) -> Result<Self> {
        if a.n() != b.n() {
            return Err(Error::param(format!(
                "clusterings differ in size: {} vs {}",
                a.n(),
                b.n()
            )));
        }
        let mut counts = vec![vec![0u64; b.k()]; a.k()];
        for (&x, &y) in a.labels().iter().zip(b.labels()) {
            counts[x][y] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..b.k()).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(ContingencyTable {
            counts,
            row_sums,
            col_sums,
            total: a.n() as u64,
        })
    }
}

fn comb2(x: u64) -> f64 {
    (x as f64) * (x as f64 - 1.0) / 2.0
}

fn check_size(a: &Clustering) -> Result<()> {
    if a.n() < 2 {
        return Err(Error::param("agreement metrics need at least 2 objects"));
    }
    Ok(())
}

/// Adjusted Rand index (Hubert & Arabie).
pub fn ari(a: &Clustering, b: &Clustering) -> Result<f64> {
    check_size(a)?;
    let t = ContingencyTable::new(a, b)?;
    let index: f64 = t.counts.iter().flatten().map(|&c| comb2(c)).sum();
    let sum_a: f64 = t.row_sums.iter().map(|&c| comb2(c)).sum();
    let sum_b: f64 = t.col_sums.iter().map(|&c| comb2(c)).sum();
    let expected = sum_a * sum_b / comb2(t.total);
    let max = 0.5 * (sum_a + sum_b);
    if (max - expected).abs() < 1e-12 {
        // Both clusterings are all-singletons or both are one cluster.
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn mutual_information(t: &ContingencyTable) -> f64 {
    let n = t.total as f64;
    let mut mi = 0.0;
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (n * c / (t.row_sums[i] as f64 * t.col_sums[j] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Expected mutual information under the hypergeometric permutation model.
fn expected_mutual_information(t: &ContingencyTable) -> f64 {
    let n = t.total;
    let nf = n as f64;
    let ln_fact = |x: u64| ln_gamma(x as f64 + 1.0);
    let mut emi = 0.0;
    for &a in &t.row_sums {
        for &b in &t.col_sums {
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            for nij in lo..=hi {
                let x = nij as f64;
                let term = x / nf * (nf * x / (a as f64 * b as f64)).ln();
                let log_p = ln_fact(a) + ln_fact(b) + ln_fact(n - a) + ln_fact(n - b)
                    - ln_fact(n)
                    - ln_fact(nij)
                    - ln_fact(a - nij)
                    - ln_fact(b - nij)
                    - ln_fact(n + nij - a - b);
                emi += term * log_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information with arithmetic-mean entropy normalisation.
pub fn ami(a: &Clustering, b: &Clustering) -> Result<f64> {
    check_size(a)?;
    let t = ContingencyTable::new(a, b)?;
    let n = t.total as f64;
    let (ha, hb) = (entropy(&t.row_sums, n), entropy(&t.col_sums, n));
    let mi = mutual_information(&t);
    let emi = expected_mutual_information(&t);
    let denom = 0.5 * (ha + hb) - emi;
    if denom.abs() < 1e-12 {
        // Zero-information on both sides; only identical partitions agree.
        return Ok(if a.same_partition(b) { 1.0 } else { 0.0 });
    }
    Ok((mi - emi) / denom)
}
