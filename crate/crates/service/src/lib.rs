//! Labelling service for active correlation clustering.
//!
//! Each session runs the active loop with a human in place of the simulated
//! oracle: `GET /sessions/{id}/tasks` hands out the pending batch,
//! `POST /sessions/{id}/answers` records judgements, and completing a batch
//! re-clusters and scores the next one. Sessions persist as append-only
//! JSON-lines event logs and are rebuilt by replay on startup.

mod api;
mod error;
mod registry;
pub mod session;

pub use api::{router, serve, TaskQuery};
pub use error::{ServiceError, ServiceResult};
pub use registry::Registry;
pub use session::{
    AnswerValue, CreateSession, Event, InitialSimilarity, Item, Judgement, Progress, Session,
    Snapshot, SubmitAnswer, Task, TraceRow,
};
