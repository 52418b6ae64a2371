//! Supervised distributed computing over task DAGs.
//!
//! A reliable supervisor schedules the tasks of a DAG on workers drawn from a
//! pool in which each sample is adversarial with probability β. The
//! supervisor handles metadata only (task ids, item counts, digests); workers
//! verify their inputs, compute, and report DONE or REJECT, and REJECTs roll
//! the computation back. Two complete applications are included: verified
//! matrix multiplication and a mergesort network hardened against malicious
//! workers.

pub mod adversary;
pub mod compute;
pub mod error;
pub mod harness;
pub mod matmul;
pub mod mergesort;
pub mod metrics;
pub mod protocol;
pub mod rng;
pub mod taskgraph;
pub mod verify;

pub use error::{Error, Result};
