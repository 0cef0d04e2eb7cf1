//! Clustering agreement metrics, learning-curve summaries and the exhaustive
//! enumeration oracles used to check the inference code on small instances.

mod agreement;
mod brute;
mod curve;

pub use agreement::{ami, ari, ContingencyTable};
pub use brute::{brute_gibbs, brute_min_cost, enumerate_partitions, GibbsEnumeration, MinCostReport};
pub use curve::{auc, mean_std, sign_test_greater};
