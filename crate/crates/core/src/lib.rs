//! Question-only instruction induction.
//!
//! A task's instruction is induced once from a few unlabeled questions
//! (per-question strategies, then one synthesis call) and reused for every
//! question in the task. The crate also runs the instance-level baselines
//! against the same tasks and aggregates the results offline.

pub mod dataset;
pub mod eval;
pub mod fsutil;
pub mod gateway;
mod method;
pub mod pipeline;
pub mod runtime;
pub mod tags;
pub mod templates;

pub use method::{Method, UnknownMethod};
