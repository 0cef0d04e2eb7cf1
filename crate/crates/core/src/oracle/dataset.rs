//! Feature datasets: the Gaussian-blob generator, CSV ingestion and Lloyd's
//! k-means.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::GroundTruth;
use crate::rng::{stream_rng, Stream};
use crate::{Clustering, Error, Result};

/// Feature matrix (one row per object) with its true labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub truth: GroundTruth,
}

const CENTER_STD: f64 = 5.0;

/// `k` isotropic unit-variance blobs in `d` dimensions with centres drawn
/// from `N(0, 5²)`. Objects are split evenly; the last cluster absorbs the
/// remainder when `k` does not divide `n`.
pub fn gen_synthetic(n: usize, k: usize, d: usize, seed: u64) -> Result<Dataset> {
    if k == 0 || d == 0 {
        return Err(Error::param("k and d must be positive"));
    }
    if n < 2 || n < k {
        return Err(Error::param(format!("need at least max(2, k) objects, got n = {n}, k = {k}")));
    }
    let mut rng = stream_rng(seed, Stream::Dataset, 0);
    let center_dist = Normal::new(0.0, CENTER_STD).expect("valid std");
    let unit = Normal::new(0.0, 1.0).expect("valid std");
    let centers = Array2::from_shape_fn((k, d), |_| center_dist.sample(&mut rng));
    let per = n / k;
    let labels: Vec<usize> = (0..n).map(|i| (i / per).min(k - 1)).collect();
    let features = Array2::from_shape_fn((n, d), |(i, j)| centers[[labels[i], j]] + unit.sample(&mut rng));
    Ok(Dataset {
        features,
        truth: GroundTruth::new(labels)?,
    })
}

/// Reads a CSV file with a header row. `label_column` names the column
/// holding the true label (any string); every other column must parse as a
/// real number.
pub fn read_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(file, label_column)
}

pub fn read_csv_from(reader: impl Read, label_column: &str) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Parse(format!("no column named {label_column:?}")))?;
    let d = headers.len() - 1;
    if d == 0 {
        return Err(Error::Parse("no feature columns".into()));
    }
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        for (i, field) in record.iter().enumerate() {
            if i == label_idx {
                let next = ids.len();
                labels.push(*ids.entry(field.to_string()).or_insert(next));
            } else {
                let x: f64 = field.trim().parse().map_err(|_| {
                    Error::Parse(format!("row {}: {:?} is not a number", line + 2, field))
                })?;
                values.push(x);
            }
        }
    }
    let n = labels.len();
    let features = Array2::from_shape_vec((n, d), values).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(Dataset {
        features,
        truth: GroundTruth::new(labels)?,
    })
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm from `k` distinct random points. Stops after `iters`
/// rounds or when assignments no longer change; an emptied cluster is
/// re-seeded with the point farthest from its centre.
pub fn lloyd_kmeans(features: &Array2<f64>, k: usize, iters: usize, rng: &mut impl Rng) -> Result<Clustering> {
    let (n, d) = features.dim();
    if d == 0 || n == 0 {
        return Err(Error::param("empty feature matrix"));
    }
    if k == 0 || k > n {
        return Err(Error::param(format!("k must be in 1..={n}, got {k}")));
    }
    let mut centers = Array2::zeros((k, d));
    for (c, i) in sample(rng, n, k).into_iter().enumerate() {
        centers.row_mut(c).assign(&features.row(i));
    }
    let mut assign = vec![usize::MAX; n];
    for _ in 0..iters.max(1) {
        let mut changed = false;
        let mut dist = vec![0.0; n];
        for i in 0..n {
            let (best, bd) = (0..k)
                .map(|c| (c, sq_dist(features.row(i), centers.row(c))))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            dist[i] = bd;
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        let mut counts = vec![0usize; k];
        for &a in &assign {
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .filter(|&i| counts[assign[i]] > 1)
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]))
                    .expect("k <= n leaves a donor cluster");
                counts[assign[far]] -= 1;
                assign[far] = c;
                counts[c] = 1;
                dist[far] = 0.0;
                changed = true;
            }
        }
        centers.fill(0.0);
        for i in 0..n {
            let mut row = centers.row_mut(assign[i]);
            row += &features.row(i);
        }
        for c in 0..k {
            let mut row = centers.row_mut(c);
            row /= counts[c] as f64;
        }
        if !changed {
            break;
        }
    }
    Clustering::from_labels(assign)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ari;
    use crate::rng::seeded;
    use crate::simcore::num_pairs;

    #[test]
    fn synthetic_defaults() {
        let ds = gen_synthetic(500, 10, 10, 1).unwrap();
        assert_eq!(ds.features.dim(), (500, 10));
        assert_eq!(num_pairs(ds.truth.n()), 124_750);
        assert_eq!(ds.truth.clustering().sizes(), vec![50; 10]);
        let again = gen_synthetic(500, 10, 10, 1).unwrap();
        assert_eq!(ds.features, again.features);
        assert_eq!(ds.truth, again.truth);
        let padded = gen_synthetic(23, 5, 2, 1).unwrap();
        assert_eq!(padded.truth.clustering().sizes(), vec![4, 4, 4, 4, 7]);
        assert!(gen_synthetic(3, 5, 2, 1).is_err());
    }

    #[test]
    fn kmeans_edge_cases() {
        let ds = gen_synthetic(40, 4, 3, 2).unwrap();
        let one = lloyd_kmeans(&ds.features, 1, 10, &mut seeded(0)).unwrap();
        assert_eq!(one.k(), 1);
        let all = lloyd_kmeans(&ds.features, 40, 10, &mut seeded(0)).unwrap();
        assert_eq!(all.k(), 40);
        assert!(lloyd_kmeans(&ds.features, 41, 10, &mut seeded(0)).is_err());
    }

    #[test]
    fn kmeans_separates_blobs() {
        let mut rng = seeded(11);
        let unit = Normal::new(0.0, 0.5).unwrap();
        let f = Array2::from_shape_fn((60, 2), |(i, _)| {
            let c = if i < 30 { -20.0 } else { 20.0 };
            c + unit.sample(&mut rng)
        });
        let truth = Clustering::from_labels((0..60).map(|i| i / 30).collect()).unwrap();
        for seed in 0..5 {
            let c = lloyd_kmeans(&f, 2, 50, &mut seeded(seed)).unwrap();
            assert_eq!(ari(&c, &truth).unwrap(), 1.0);
        }
    }

    #[test]
    fn csv_ingestion() {
        let text = "x,label,y\n0.5,cat,1\n-1,dog,2.5\n3,cat,0\n";
        let ds = read_csv_from(text.as_bytes(), "label").unwrap();
        assert_eq!(ds.truth.labels(), &[0, 1, 0]);
        assert_eq!(ds.features.row(1).to_vec(), vec![-1.0, 2.5]);
        assert!(read_csv_from(text.as_bytes(), "nope").is_err());
        assert!(read_csv_from("a,b\n1,x\n2,y\n".as_bytes(), "a").is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, text).unwrap();
        assert_eq!(read_csv(&path, "label").unwrap().features.dim(), (3, 2));
        assert!(read_csv(dir.path().join("missing.csv"), "label").is_err());
    }
}
