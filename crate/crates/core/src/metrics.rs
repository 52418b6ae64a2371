//! Per-run counters.

use serde::{Deserialize, Serialize};

/// Elementary work done by one party while executing a step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Work {
    /// Field multiply-adds.
    pub mul_adds: u64,
    /// Field additions not paired with a multiplication.
    pub additions: u64,
    /// Key comparisons.
    pub comparisons: u64,
    /// Verification steps: words hashed, tags and index bounds checked.
    pub verify: u64,
}

impl Work {
    /// Computational work units: arithmetic plus comparisons.
    pub fn computational(&self) -> u64 {
        self.mul_adds + self.additions + self.comparisons
    }

    pub fn absorb(&mut self, other: &Work) {
        self.mul_adds += other.mul_adds;
        self.additions += other.additions;
        self.comparisons += other.comparisons;
        self.verify += other.verify;
    }
}

/// A counter split by role.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleCounts {
    pub source: u64,
    pub supervisor: u64,
    pub workers: u64,
    pub target: u64,
}

impl RoleCounts {
    pub fn total(&self) -> u64 {
        self.source + self.supervisor + self.workers + self.target
    }
}

/// Counters collected over one run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    /// Rounds executed.
    pub rounds: u64,
    /// Full-input transmissions by the source, summed over initial tasks.
    pub source_sends: u64,
    /// Largest number of transmissions to any single initial task.
    pub max_source_sends_per_initial: u64,
    /// Deliveries of final outputs to the target.
    pub target_receives: u64,
    /// Computational work (arithmetic and comparisons) by role.
    pub comp_work: RoleCounts,
    /// Communication work (items or field elements sent) by role.
    pub comm_work: RoleCounts,
    /// Field multiply-adds by honest workers.
    pub mul_adds: u64,
    /// Verification steps (words hashed, tags and indices checked), all roles.
    pub verify_work: u64,
    /// Metadata messages handled by the supervisor.
    pub supervisor_msgs: u64,
    /// Largest number of input items handled by one task execution.
    pub per_task_max_items: u64,
    /// Task executions started (one per sampled worker).
    pub executions: u64,
    /// Executions by adversarial workers.
    pub adversarial_executions: u64,
}
