//! Test support shared by the workspace's test suites: an independent
//! re-implementation of the span matcher to check the real one against, a
//! small deterministic RNG with a random-instance generator, and a
//! scripted backend for driving the pipeline without a model.
//!
//! Nothing here ships in release artifacts; the crate exists so the core
//! property tests and the acceptance suite agree on one oracle.

mod oracle;
pub mod parser_cases;
mod rng;
mod scripted;
pub mod segmenter_cases;

pub use oracle::{enumerate_choice_counts, oracle_counts};
pub use rng::{random_instance, EvalInstance, TestRng};
pub use scripted::ScriptedBackend;
