use std::fmt;

use crate::adversary::{Corruption, Destination};
use crate::metrics::Work;
use crate::protocol::state::{Aux, SupervisorState};
use crate::rng::SimRng;
use crate::taskgraph::{TaskGraph, TaskId};

/// Private resources of an honest worker during one execution.
pub struct WorkCtx<'a> {
    pub rng: &'a mut SimRng,
    pub work: &'a mut Work,
}

/// Result of an honest execution.
#[derive(Debug, Clone, PartialEq)]
pub enum Execution<P> {
    /// Inputs verified; `outputs` holds one payload per successor slot, or
    /// exactly one payload for the target when the task is final.
    Done { aux: Aux, outputs: Vec<P> },
    /// The listed predecessors delivered bad or missing inputs.
    Reject(Vec<TaskId>),
}

/// Task semantics plugged into the engine.
///
/// Supervisor-side hooks (`check_done`, the target checks) receive only the
/// supervisor's metadata, never payloads of other tasks.
pub trait Application {
    type Payload: Clone + fmt::Debug;
    type Output: Clone + PartialEq + fmt::Debug;

    fn graph(&self) -> &TaskGraph;

    /// What the source sends to initial task `v`.
    fn source_input(&self, v: TaskId) -> Self::Payload;

    /// Honest execution of `v`. `inputs` is aligned with `graph().preds(v)`,
    /// or holds the single source input for an initial task; `None` marks a
    /// predecessor that sent nothing.
    fn execute(
        &self,
        v: TaskId,
        inputs: &[Option<Self::Payload>],
        sup: &SupervisorState,
        ctx: &mut WorkCtx<'_>,
    ) -> Execution<Self::Payload>;

    /// Supervisor-side check of a DONE declaration; failing answers are
    /// discarded and the task is resampled.
    fn check_done(&self, _v: TaskId, _aux: &Aux, _sup: &SupervisorState) -> bool {
        true
    }

    /// The target's check of the stream delivered by final task `v`.
    fn target_accepts(&self, v: TaskId, payload: &Self::Payload, sup: &SupervisorState, work: &mut Work) -> bool;

    /// Combines the accepted final streams, given in `graph().final_tasks()`
    /// order. On failure returns the final tasks whose streams must be redone.
    fn assemble(&self, streams: &[&Self::Payload], work: &mut Work) -> Result<Self::Output, Vec<TaskId>>;

    /// Brute-force answer used to judge correctness.
    fn oracle(&self) -> Self::Output;

    /// Items or field elements carried by a payload.
    fn payload_units(&self, p: &Self::Payload) -> u64;

    /// Metadata entries the supervisor hands a worker assigned to `v`.
    fn hint_units(&self, _v: TaskId) -> u64 {
        0
    }

    /// Distorted version of the declaration an honest worker would make.
    fn tamper_aux(&self, v: TaskId, honest: &Aux, kind: Corruption, rng: &mut SimRng) -> Aux;

    /// Distorted version of the payload for output `slot` of `v`, given the
    /// faithful payloads of all of `v`'s outputs.
    fn corrupt(
        &self,
        v: TaskId,
        slot: usize,
        dest: Destination,
        faithful: &[Self::Payload],
        kind: Corruption,
        rng: &mut SimRng,
    ) -> Option<Self::Payload>;
}
