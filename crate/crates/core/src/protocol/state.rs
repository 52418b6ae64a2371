use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::adversary::WorkerId;
use crate::error::{Error, Result};
use crate::taskgraph::{TaskGraph, TaskId};
use crate::verify::Digest;

/// Metadata a worker declares to the supervisor with a DONE report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aux {
    None,
    /// Digest of the task's result.
    Digest(Digest),
    /// Number of items the task sends to each successor (or to the target).
    Counts(Vec<u64>),
}

impl Aux {
    pub fn counts(&self) -> Option<&[u64]> {
        match self {
            Aux::Counts(c) => Some(c),
            _ => None,
        }
    }

    pub fn digest(&self) -> Option<Digest> {
        match self {
            Aux::Digest(d) => Some(*d),
            _ => None,
        }
    }
}

/// A worker's report at the end of a round. Silence is a report too.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Report {
    Done(Aux),
    Reject(Vec<TaskId>),
    Silent,
}

/// What applying a report changed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReportEffect {
    Finished,
    Pruned(Vec<TaskId>),
    /// Silence, or a malformed report treated like silence.
    Ignored,
}

/// The supervisor's bookkeeping. Holds identities, counts and digests only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupervisorState {
    finished: Vec<bool>,
    finished_count: usize,
    preds_finished: Vec<u32>,
    wavefront: BTreeSet<TaskId>,
    last_worker: Vec<Option<WorkerId>>,
    aux: Vec<Option<Aux>>,
    round: u64,
}

impl SupervisorState {
    /// Nothing finished; the wavefront is the set of initial tasks.
    pub fn new(g: &TaskGraph) -> Self {
        let n = g.len();
        Self {
            finished: vec![false; n],
            finished_count: 0,
            preds_finished: vec![0; n],
            wavefront: g.initial_tasks().iter().copied().collect(),
            last_worker: vec![None; n],
            aux: vec![None; n],
            round: 0,
        }
    }

    /// A state whose finished set is `finished`, which must be ancestor-closed.
    pub fn with_finished(g: &TaskGraph, finished: &[TaskId]) -> Result<Self> {
        let mut s = Self::new(g);
        let mut set = vec![false; g.len()];
        for &v in finished {
            set[v.index()] = true;
        }
        if !is_closed(g, &set) {
            return Err(Error::Invariant("finished set is not ancestor-closed".into()));
        }
        for v in g.topological_order() {
            if set[v.index()] {
                s.mark_done(g, v, None, Aux::None)?;
            }
        }
        Ok(s)
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub(crate) fn advance_round(&mut self) {
        self.round += 1;
    }

    pub fn is_finished(&self, v: TaskId) -> bool {
        self.finished[v.index()]
    }

    pub fn finished_count(&self) -> usize {
        self.finished_count
    }

    pub fn all_finished(&self) -> bool {
        self.finished_count == self.finished.len()
    }

    pub fn finished_tasks(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.finished
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .map(|(i, _)| TaskId(i as u32))
    }

    /// Executable tasks in ascending id order.
    pub fn wavefront(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.wavefront.iter().copied()
    }

    pub fn wavefront_len(&self) -> usize {
        self.wavefront.len()
    }

    pub fn in_wavefront(&self, v: TaskId) -> bool {
        self.wavefront.contains(&v)
    }

    /// The worker whose DONE put `v` into the finished set, while it is there.
    pub fn last_worker(&self, v: TaskId) -> Option<WorkerId> {
        self.last_worker[v.index()]
    }

    /// The declaration accepted with `v`'s DONE, while `v` is finished.
    pub fn aux(&self, v: TaskId) -> Option<&Aux> {
        self.aux[v.index()].as_ref()
    }

    /// Items `u` declared it sends to its successor `w` (or to the target
    /// when `w` is `None` and `u` is final).
    pub fn declared_count(&self, g: &TaskGraph, u: TaskId, w: Option<TaskId>) -> Option<u64> {
        let slot = match w {
            Some(w) => g.succ_slot(u, w)?,
            None => 0,
        };
        self.aux(u)?.counts()?.get(slot).copied()
    }

    /// Adds a wavefront task to the finished set.
    pub fn mark_done(&mut self, g: &TaskGraph, v: TaskId, worker: Option<WorkerId>, aux: Aux) -> Result<()> {
        if !self.wavefront.remove(&v) {
            return Err(Error::Invariant(format!("{v} finished outside the wavefront")));
        }
        self.finished[v.index()] = true;
        self.finished_count += 1;
        self.last_worker[v.index()] = worker;
        self.aux[v.index()] = Some(aux);
        for &w in g.succs(v) {
            let c = &mut self.preds_finished[w.index()];
            *c += 1;
            if *c as usize == g.preds(w).len() && !self.finished[w.index()] {
                self.wavefront.insert(w);
            }
        }
        Ok(())
    }

    /// Removes every finished task in `roots` and every finished task
    /// reachable from one; returns the removed tasks in ascending order.
    pub fn prune(&mut self, g: &TaskGraph, roots: &[TaskId]) -> Vec<TaskId> {
        let mut removed = Vec::new();
        let mut stack = Vec::new();
        for &r in roots {
            if self.finished[r.index()] {
                self.finished[r.index()] = false;
                stack.push(r);
            }
        }
        while let Some(v) = stack.pop() {
            removed.push(v);
            for &w in g.succs(v) {
                if self.finished[w.index()] {
                    self.finished[w.index()] = false;
                    stack.push(w);
                }
            }
        }
        for &v in &removed {
            self.last_worker[v.index()] = None;
            self.aux[v.index()] = None;
        }
        self.finished_count -= removed.len();
        for &v in &removed {
            for &w in g.succs(v) {
                self.preds_finished[w.index()] -= 1;
                self.wavefront.remove(&w);
            }
        }
        for &v in &removed {
            if self.preds_finished[v.index()] as usize == g.preds(v).len() {
                self.wavefront.insert(v);
            }
        }
        removed.sort_unstable();
        removed
    }

    /// Applies one report from the worker executing wavefront task `v`.
    pub fn apply_report(
        &mut self,
        g: &TaskGraph,
        v: TaskId,
        worker: Option<WorkerId>,
        report: Report,
    ) -> Result<ReportEffect> {
        if !self.in_wavefront(v) {
            return Err(Error::Invariant(format!("report for {v}, which is not executable")));
        }
        match report {
            Report::Silent => Ok(ReportEffect::Ignored),
            Report::Done(aux) => {
                self.mark_done(g, v, worker, aux)?;
                Ok(ReportEffect::Finished)
            }
            Report::Reject(r) => {
                if !rejection_is_wellformed(g, v, &r) {
                    return Ok(ReportEffect::Ignored);
                }
                Ok(ReportEffect::Pruned(self.prune(g, &r)))
            }
        }
    }

    /// Path-mode rollback after a REJECT from position `i` (1-based; `i = n + 1`
    /// is the target): `v_{i-1}` leaves the finished set so that a fresh
    /// worker re-executes it, fed by the last worker of `v_{i-2}`. For `i = 1`
    /// nothing is removed and `v_1` is re-executed from the source.
    /// Returns the task scheduled next and the tasks removed from the
    /// finished set.
    pub fn path_mode_rollback(&mut self, g: &TaskGraph, i: usize) -> Result<(TaskId, Vec<TaskId>)> {
        if !g.is_path() {
            return Err(Error::Config("path-mode rollback on a graph that is not a path".into()));
        }
        if i == 0 || i > g.len() + 1 {
            return Err(Error::Invariant(format!("rollback position {i} out of range")));
        }
        if i == 1 {
            return Ok((TaskId(0), Vec::new()));
        }
        let prev = TaskId((i - 2) as u32);
        if !self.is_finished(prev) {
            return Err(Error::Invariant(format!("rollback past unfinished {prev}")));
        }
        let removed = self.prune(g, &[prev]);
        Ok((prev, removed))
    }

    /// Brute-force ancestor-closure check over all edges.
    pub fn check_closure(&self, g: &TaskGraph) -> bool {
        is_closed(g, &self.finished)
    }
}

/// Every task named in `r` must be a distinct predecessor of `v`.
pub fn rejection_is_wellformed(g: &TaskGraph, v: TaskId, r: &[TaskId]) -> bool {
    let preds = g.preds(v);
    r.iter().all(|u| preds.contains(u)) && r.iter().enumerate().all(|(i, u)| !r[..i].contains(u))
}

fn is_closed(g: &TaskGraph, finished: &[bool]) -> bool {
    g.edges().all(|(u, w)| !finished[w.index()] || finished[u.index()])
}

/// The tasks outside `finished` all of whose predecessors are in it.
pub fn wavefront(g: &TaskGraph, finished: &[TaskId]) -> Result<BTreeSet<TaskId>> {
    let mut set = vec![false; g.len()];
    for &v in finished {
        set[v.index()] = true;
    }
    if !is_closed(g, &set) {
        return Err(Error::Invariant("finished set is not ancestor-closed".into()));
    }
    Ok(g.tasks()
        .filter(|&v| !set[v.index()] && g.preds(v).iter().all(|u| set[u.index()]))
        .collect())
}
