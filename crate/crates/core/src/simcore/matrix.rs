use super::Pair;

/// Read-only CSR snapshot of pairwise similarity estimates.
///
/// Both `(u, v)` and `(v, u)` are present for every stored pair and each row
/// is sorted by column. The diagonal is never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SimilarityMatrix {
    /// Builds the matrix from pairs given in ascending `(u, v)` order.
    /// Exact zeros are skipped.
    pub(crate) fn from_sorted_pairs(n: usize, pairs: impl Iterator<Item = (Pair, f64)>) -> Self {
        let pairs: Vec<(Pair, f64)> = pairs.filter(|&(_, s)| s != 0.0).collect();
        let mut degree = vec![0usize; n];
        for (p, _) in &pairs {
            degree[p.u()] += 1;
            degree[p.v()] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let nnz = *offsets.last().unwrap();
        let mut cols = vec![0; nnz];
        let mut vals = vec![0.0; nnz];
        let mut fill = offsets[..n].to_vec();
        // Ascending (u, v) order keeps every row sorted: the entries (w, v)
        // with w < v all precede the entries (v, x) with x > v.
        for (p, s) in pairs {
            let (u, v) = (p.u(), p.v());
            cols[fill[u]] = v;
            vals[fill[u]] = s;
            fill[u] += 1;
            cols[fill[v]] = u;
            vals[fill[v]] = s;
            fill[v] += 1;
        }
        SimilarityMatrix {
            n,
            offsets,
            cols,
            vals,
        }
    }

    /// Dense symmetric input; only the upper triangle is read.
    pub fn from_dense(dense: &[Vec<f64>]) -> Self {
        let n = dense.len();
        let pairs = super::all_pairs(n).map(|p| (p, dense[p.u()][p.v()]));
        Self::from_sorted_pairs(n, pairs)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored directed entries (twice the number of pairs).
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    #[inline]
    pub fn row(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[u]..self.offsets[u + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    #[inline]
    pub(crate) fn row_slices(&self, u: usize) -> (&[usize], &[f64]) {
        let range = self.offsets[u]..self.offsets[u + 1];
        (&self.cols[range.clone()], &self.vals[range])
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        let (cols, vals) = self.row_slices(u);
        cols.binary_search(&v).map_or(0.0, |i| vals[i])
    }

    /// Stored pairs with `u < v`.
    pub fn pairs(&self) -> impl Iterator<Item = (Pair, f64)> + '_ {
        (0..self.n).flat_map(move |u| {
            self.row(u)
                .filter(move |&(v, _)| v > u)
                .map(move |(v, s)| (Pair::new(u, v).expect("u < v"), s))
        })
    }

    /// Copy with the entry for `(a, b)` replaced by `value`.
    pub fn with_override(&self, a: usize, b: usize, value: f64) -> Self {
        let target = Pair::new(a, b).expect("distinct objects");
        let mut replaced = false;
        let mut pairs: Vec<(Pair, f64)> = self
            .pairs()
            .map(|(p, s)| {
                if p == target {
                    replaced = true;
                    (p, value)
                } else {
                    (p, s)
                }
            })
            .collect();
        if !replaced {
            pairs.push((target, value));
            pairs.sort_by_key(|(p, _)| *p);
        }
        Self::from_sorted_pairs(self.n, pairs.into_iter())
    }

    /// Dense `n x n` copy, row-major.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.n * self.n];
        for u in 0..self.n {
            for (v, s) in self.row(u) {
                dense[u * self.n + v] = s;
            }
        }
        dense
    }
}
