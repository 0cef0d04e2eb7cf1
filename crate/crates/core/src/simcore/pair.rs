use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Unordered pair of distinct objects, stored with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "[usize; 2]", try_from = "[usize; 2]")]
pub struct Pair {
    u: usize,
    v: usize,
}

impl Pair {
    pub fn new(a: usize, b: usize) -> Result<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Ok(Pair { u: a, v: b }),
            std::cmp::Ordering::Greater => Ok(Pair { u: b, v: a }),
            std::cmp::Ordering::Equal => Err(Error::InvalidPair(a, b)),
        }
    }

    /// Like [`Pair::new`] but also checks both objects are below `n`.
    pub fn checked(a: usize, b: usize, n: usize) -> Result<Self> {
        if a >= n || b >= n {
            return Err(Error::InvalidPair(a, b));
        }
        Pair::new(a, b)
    }

    #[inline]
    pub fn u(self) -> usize {
        self.u
    }

    #[inline]
    pub fn v(self) -> usize {
        self.v
    }

    pub fn contains(self, x: usize) -> bool {
        self.u == x || self.v == x
    }
}

impl From<Pair> for [usize; 2] {
    fn from(p: Pair) -> Self {
        [p.u, p.v]
    }
}

impl TryFrom<[usize; 2]> for Pair {
    type Error = Error;

    fn try_from(value: [usize; 2]) -> Result<Self> {
        Pair::new(value[0], value[1])
    }
}

impl std::fmt::Display for Pair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.u, self.v)
    }
}

/// |E| = n(n-1)/2.
pub fn num_pairs(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Row-major index of `pair` among all pairs of `n` objects.
pub fn pair_index(n: usize, pair: Pair) -> usize {
    let (u, v) = (pair.u, pair.v);
    u * (2 * n - u - 1) / 2 + (v - u - 1)
}

/// Inverse of [`pair_index`].
pub fn pair_at(n: usize, index: usize) -> Pair {
    debug_assert!(index < num_pairs(n));
    // Row u starts at u(2n-u-1)/2; solve the quadratic then fix rounding.
    let nf = n as f64;
    let disc = (2.0 * nf - 1.0).powi(2) - 8.0 * index as f64;
    let mut u = ((2.0 * nf - 1.0 - disc.max(0.0).sqrt()) / 2.0).floor() as usize;
    let row_start = |u: usize| u * (2 * n - u - 1) / 2;
    while u > 0 && row_start(u) > index {
        u -= 1;
    }
    while u + 1 < n && row_start(u + 1) <= index {
        u += 1;
    }
    let v = index - row_start(u) + u + 1;
    Pair { u, v }
}

/// All pairs in row-major order.
pub fn all_pairs(n: usize) -> impl Iterator<Item = Pair> {
    (0..n).flat_map(move |u| (u + 1..n).map(move |v| Pair { u, v }))
}
