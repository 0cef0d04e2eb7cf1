//! Seed derivation.
//!
//! Every random decision in a run draws from its own ChaCha stream derived
//! from `(run seed, stream tag, index)`, so that a component's randomness does
//! not depend on how many numbers another component consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams used by one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Oracle = 2,
    Cluster = 3,
    Acquisition = 4,
    Selection = 5,
    Dataset = 6,
    Kmeans = 7,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(stream as u64)).wrapping_add(index))
}

pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index))
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
