//! Core domain types: object pairs, the similarity accumulator, its CSR
//! snapshot, clusterings and the violation / max-correlation costs.

mod clustering;
mod cost;
mod matrix;
mod pair;
mod store;

pub use clustering::Clustering;
pub use cost::{cost_delta, cost_r, violation, Similarity};
pub(crate) use cost::violation_value;
pub use matrix::SimilarityMatrix;
pub use pair::{all_pairs, num_pairs, pair_at, pair_index, Pair};
pub use store::{Entry, SimilarityStore};
