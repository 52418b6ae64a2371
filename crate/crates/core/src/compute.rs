//! A synthetic application for path and DAG experiments.
//!
//! Each task computes a 64-bit value from its inputs with a fixed mixing
//! function. Honest workers check each input against the value the
//! predecessor must have produced, which models the local verifiability the
//! protocol assumes; the target checks final values the same way.

use rand::seq::index::sample;
use rand::Rng;

use crate::adversary::{Corruption, Destination};
use crate::error::{Error, Result};
use crate::metrics::Work;
use crate::protocol::{Application, Aux, Execution, SupervisorState, WorkCtx};
use crate::rng::SimRng;
use crate::taskgraph::{DagBuilder, TaskGraph, TaskId, TaskKind};

fn mix(mut x: u64) -> u64 {
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Value-propagating application over an arbitrary task graph.
#[derive(Debug, Clone)]
pub struct ComputeApp {
    graph: TaskGraph,
    source: Vec<u64>,
    truth: Vec<u64>,
}

impl ComputeApp {
    /// Values derive from `seed`; relays forward their input unchanged.
    pub fn new(graph: TaskGraph, seed: u64) -> Self {
        let n = graph.len();
        let source: Vec<u64> = (0..n as u64).map(|v| mix(seed ^ mix(v + 1))).collect();
        let mut truth = vec![0u64; n];
        for v in graph.topological_order() {
            truth[v.index()] = if graph.is_initial(v) {
                Self::compute(&graph, v, &[source[v.index()]])
            } else {
                let inputs: Vec<u64> = graph.preds(v).iter().map(|u| truth[u.index()]).collect();
                Self::compute(&graph, v, &inputs)
            };
        }
        Self { graph, source, truth }
    }

    fn compute(g: &TaskGraph, v: TaskId, inputs: &[u64]) -> u64 {
        if g.kind(v).is_relay() {
            return inputs[0];
        }
        inputs
            .iter()
            .fold(mix(v.0 as u64 + 0x9e37_79b9), |acc, &x| mix(acc ^ x))
    }

    /// The value task `v` must produce.
    pub fn truth(&self, v: TaskId) -> u64 {
        self.truth[v.index()]
    }
}

impl Application for ComputeApp {
    type Payload = u64;
    type Output = Vec<u64>;

    fn graph(&self) -> &TaskGraph {
        &self.graph
    }

    fn source_input(&self, v: TaskId) -> u64 {
        self.source[v.index()]
    }

    fn execute(&self, v: TaskId, inputs: &[Option<u64>], _: &SupervisorState, ctx: &mut WorkCtx<'_>) -> Execution<u64> {
        let g = &self.graph;
        ctx.work.comparisons += inputs.len() as u64;
        let values: Vec<u64> = if g.is_initial(v) {
            match inputs.first().copied().flatten() {
                Some(x) if x == self.source[v.index()] => vec![x],
                _ => return Execution::Reject(Vec::new()),
            }
        } else {
            let bad: Vec<TaskId> = g
                .preds(v)
                .iter()
                .zip(inputs)
                .filter(|(u, x)| **x != Some(self.truth[u.index()]))
                .map(|(&u, _)| u)
                .collect();
            if !bad.is_empty() {
                return Execution::Reject(bad);
            }
            inputs.iter().map(|x| x.expect("checked")).collect()
        };
        ctx.work.additions += 1;
        let out = Self::compute(g, v, &values);
        Execution::Done {
            aux: Aux::None,
            outputs: vec![out; g.succs(v).len().max(1)],
        }
    }

    fn target_accepts(&self, v: TaskId, payload: &u64, _: &SupervisorState, work: &mut Work) -> bool {
        work.comparisons += 1;
        *payload == self.truth[v.index()]
    }

    fn assemble(&self, streams: &[&u64], _: &mut Work) -> Result<Vec<u64>, Vec<TaskId>> {
        Ok(streams.iter().map(|&&x| x).collect())
    }

    fn oracle(&self) -> Vec<u64> {
        self.graph.final_tasks().iter().map(|f| self.truth[f.index()]).collect()
    }

    fn payload_units(&self, _: &u64) -> u64 {
        1
    }

    fn tamper_aux(&self, _: TaskId, honest: &Aux, _: Corruption, _: &mut SimRng) -> Aux {
        honest.clone()
    }

    fn corrupt(
        &self,
        _: TaskId,
        slot: usize,
        _: Destination,
        faithful: &[u64],
        kind: Corruption,
        rng: &mut SimRng,
    ) -> Option<u64> {
        let x = faithful[slot];
        Some(match kind {
            Corruption::WrongProduct => x.wrapping_add(1),
            Corruption::Forge => rng.gen(),
            Corruption::Garbage | Corruption::CountSkew => x ^ rng.gen_range(1..=u64::MAX),
        })
    }
}

/// A random leveled DAG with `depth + 1` levels of `width` tasks and in- and
/// out-degrees at most `degree`. Every task above level 0 has at least one
/// predecessor on the level below, so the span is exactly `depth`.
pub fn random_leveled_dag(depth: usize, width: usize, degree: usize, rng: &mut SimRng) -> Result<TaskGraph> {
    if width == 0 || degree == 0 {
        return Err(Error::InvalidSize("width and degree must be positive".into()));
    }
    let mut b = DagBuilder::new();
    let mut prev: Vec<TaskId> = (0..width).map(|_| b.add_task(TaskKind::Generic)).collect();
    for _ in 0..depth {
        let cur: Vec<TaskId> = (0..width).map(|_| b.add_task(TaskKind::Generic)).collect();
        let mut out_deg = vec![0usize; width];
        for &w in &cur {
            let open: Vec<usize> = (0..width).filter(|&i| out_deg[i] < degree).collect();
            let want = rng.gen_range(1..=degree).min(open.len());
            for pick in sample(rng, open.len(), want) {
                let i = open[pick];
                out_deg[i] += 1;
                b.add_edge(prev[i], w);
            }
        }
        prev = cur;
    }
    b.build()
}
