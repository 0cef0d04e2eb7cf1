//! Active correlation clustering.
//!
//! The crate is organised around the four-step active loop: cluster the
//! current similarity estimate, score candidate pairs with an acquisition
//! function, query a (noisy) oracle for the top-scoring batch, and fold the
//! answers back into the running per-pair averages.
//!
//! - [`simcore`]: pairs, the sparse similarity accumulator, clusterings and
//!   the two equivalent cost functions.
//! - [`clusterer`]: local search over the max-correlation objective with a
//!   dynamic number of clusters.
//! - [`meanfield`]: factorial approximation of the Gibbs distribution over
//!   clusterings, including the conditioned variant used by information gain.
//! - [`acquisition`]: uniform, maxmin, maxexp, IMU-C, entropy and
//!   information-gain scoring plus top-B batch selection.
//! - [`oracle`]: ground truth, the non-persistent noise model, initial
//!   similarity construction and datasets.
//! - [`engine`]: the active loop, multi-seed suites and report aggregation.
//! - [`metrics`]: ARI, AMI, AUC and brute-force enumeration oracles.

pub mod acquisition;
pub mod clusterer;
pub mod engine;
mod error;
pub mod meanfield;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod simcore;

pub use error::{Error, Result};
pub use simcore::{Clustering, Pair, SimilarityMatrix, SimilarityStore};
