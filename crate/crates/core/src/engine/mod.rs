//! The active clustering loop, multi-seed suites and report aggregation.

mod active;
mod config;
mod suite;

pub use active::{
    init_store, run_active_loop, run_oracle, ActiveLoop, IterationRow, Proposal, RunRecord,
};
pub use config::{DatasetKind, InitKind, LoopSettings, Problem, RunConfig};
pub use suite::{
    aggregate, load_run, run_file_name, run_suite, write_summary, Aggregate, AggregateRow, AucRow,
    CellResult, SuiteResult,
};
