//! Task DAGs: construction, longest-path leveling, relay insertion and the
//! initial/final list extension.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense task identifier, contiguous in `0..graph.len()`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub u32);

impl TaskId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Role of a task. The kind selects the verification rule and the cost model
/// an application applies when the task executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum TaskKind {
    /// Initial-list task of the sorting network running `levels` bottom-up
    /// merge levels after `levels_before` have already been done upstream.
    SortPartial {
        block: u32,
        position: u32,
        levels_before: u32,
        levels: u32,
    },
    /// Relay that checks its single input and forwards it.
    ForwardInput {
        list: u32,
        position: u32,
    },
    /// Node of a broadcast tree; `node` is the heap index (root 0).
    TreeBroadcast {
        tree: u32,
        node: u32,
    },
    Multiply {
        row: u32,
        col: u32,
    },
    /// Relay on a final list.
    ForwardOutput {
        list: u32,
        position: u32,
    },
    /// Merge node at `layer >= 1` of the sorting network.
    MergeSplit {
        layer: u32,
        position: u32,
    },
    /// Layer-0 node of the sorting network that finishes sorting its block.
    Layer0Split {
        block: u32,
    },
    PathCompute {
        position: u32,
    },
    Generic,
}

impl TaskKind {
    /// True for relays created by [`TaskGraph::to_leveled`] and
    /// [`TaskGraph::extend_with_io_lists`] or by application builders.
    pub fn is_relay(&self) -> bool {
        matches!(self, TaskKind::ForwardInput { .. } | TaskKind::ForwardOutput { .. })
    }
}

/// Incremental edge-list builder; adjacency order follows insertion order.
#[derive(Debug, Clone, Default)]
pub struct DagBuilder {
    kinds: Vec<TaskKind>,
    edges: Vec<(TaskId, TaskId)>,
}

impl DagBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_task(&mut self, kind: TaskKind) -> TaskId {
        let id = TaskId(self.kinds.len() as u32);
        self.kinds.push(kind);
        id
    }

    pub fn add_edge(&mut self, from: TaskId, to: TaskId) {
        self.edges.push((from, to));
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    /// Validates the edges and labels every task; see [`assign_levels`].
    pub fn build(self) -> Result<TaskGraph> {
        assign_levels(self)
    }
}

/// An immutable, leveled-or-not task DAG with ordered adjacency.
///
/// The order of `preds(v)` defines the input slots of `v` and the order of
/// `succs(v)` defines its output slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskGraph {
    kinds: Vec<TaskKind>,
    levels: Vec<u32>,
    preds: Vec<Vec<TaskId>>,
    succs: Vec<Vec<TaskId>>,
    span: u32,
    edge_count: usize,
    initial: Vec<TaskId>,
    finals: Vec<TaskId>,
}

/// Labels every task with the length of the longest path reaching it.
pub fn assign_levels(builder: DagBuilder) -> Result<TaskGraph> {
    let n = builder.kinds.len();
    let mut preds = vec![Vec::new(); n];
    let mut succs = vec![Vec::new(); n];
    for &(u, v) in &builder.edges {
        if u.index() >= n || v.index() >= n {
            return Err(Error::InvalidSize(format!("edge ({u},{v}) names a missing task")));
        }
        if u == v {
            return Err(Error::NotADag(u));
        }
        if succs[u.index()].contains(&v) {
            return Err(Error::InvalidSize(format!("duplicate edge ({u},{v})")));
        }
        succs[u.index()].push(v);
        preds[v.index()].push(u);
    }
    TaskGraph::from_adjacency(builder.kinds, preds, succs)
}

/// A directed path `v_1 -> ... -> v_n` of [`TaskKind::PathCompute`] tasks.
pub fn build_path(n: usize) -> Result<TaskGraph> {
    if n == 0 {
        return Err(Error::InvalidSize("a path needs at least one task".into()));
    }
    let mut b = DagBuilder::new();
    let ids: Vec<TaskId> = (0..n)
        .map(|i| b.add_task(TaskKind::PathCompute { position: i as u32 }))
        .collect();
    for w in ids.windows(2) {
        b.add_edge(w[0], w[1]);
    }
    b.build()
}

/// `⌈c · log₂ n⌉`, zero for `n <= 1`.
pub fn ceil_c_log2(c: u32, n: usize) -> usize {
    if n <= 1 {
        return 0;
    }
    if n.is_power_of_two() {
        return c as usize * n.trailing_zeros() as usize;
    }
    (c as f64 * (n as f64).log2()).ceil() as usize
}

impl TaskGraph {
    fn from_adjacency(kinds: Vec<TaskKind>, preds: Vec<Vec<TaskId>>, succs: Vec<Vec<TaskId>>) -> Result<Self> {
        let n = kinds.len();
        let mut indeg: Vec<usize> = preds.iter().map(Vec::len).collect();
        let mut levels = vec![0u32; n];
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop_front() {
            seen += 1;
            for &w in &succs[v] {
                let w = w.index();
                levels[w] = levels[w].max(levels[v] + 1);
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    queue.push_back(w);
                }
            }
        }
        if seen != n {
            let stuck = (0..n).find(|&v| indeg[v] > 0).unwrap_or(0);
            return Err(Error::NotADag(TaskId(stuck as u32)));
        }
        let span = levels.iter().copied().max().unwrap_or(0);
        let edge_count = succs.iter().map(Vec::len).sum();
        let initial = (0..n)
            .filter(|&v| preds[v].is_empty())
            .map(|v| TaskId(v as u32))
            .collect();
        let finals = (0..n)
            .filter(|&v| succs[v].is_empty())
            .map(|v| TaskId(v as u32))
            .collect();
        Ok(Self {
            kinds,
            levels,
            preds,
            succs,
            span,
            edge_count,
            initial,
            finals,
        })
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn tasks(&self) -> impl Iterator<Item = TaskId> + '_ {
        (0..self.len() as u32).map(TaskId)
    }

    pub fn kind(&self, v: TaskId) -> TaskKind {
        self.kinds[v.index()]
    }

    pub fn level(&self, v: TaskId) -> u32 {
        self.levels[v.index()]
    }

    pub fn preds(&self, v: TaskId) -> &[TaskId] {
        &self.preds[v.index()]
    }

    pub fn succs(&self, v: TaskId) -> &[TaskId] {
        &self.succs[v.index()]
    }

    /// Length D of the longest directed path.
    pub fn span(&self) -> u32 {
        self.span
    }

    /// Maximum in- or out-degree.
    pub fn max_degree(&self) -> usize {
        self.preds
            .iter()
            .chain(self.succs.iter())
            .map(Vec::len)
            .max()
            .unwrap_or(0)
    }

    pub fn initial_tasks(&self) -> &[TaskId] {
        &self.initial
    }

    pub fn final_tasks(&self) -> &[TaskId] {
        &self.finals
    }

    pub fn is_initial(&self, v: TaskId) -> bool {
        self.preds[v.index()].is_empty()
    }

    pub fn is_final(&self, v: TaskId) -> bool {
        self.succs[v.index()].is_empty()
    }

    /// Position of `w` among the successors of `v`.
    pub fn succ_slot(&self, v: TaskId, w: TaskId) -> Option<usize> {
        self.succs(v).iter().position(|&x| x == w)
    }

    /// Position of `u` among the predecessors of `v`.
    pub fn pred_slot(&self, v: TaskId, u: TaskId) -> Option<usize> {
        self.preds(v).iter().position(|&x| x == u)
    }

    pub fn edges(&self) -> impl Iterator<Item = (TaskId, TaskId)> + '_ {
        self.tasks()
            .flat_map(move |v| self.succs(v).iter().map(move |&w| (v, w)))
    }

    /// Tasks in nondecreasing level order (ties by id), a topological order.
    pub fn topological_order(&self) -> Vec<TaskId> {
        let mut order: Vec<TaskId> = self.tasks().collect();
        order.sort_by_key(|&v| (self.level(v), v));
        order
    }

    /// True when every edge joins consecutive levels.
    pub fn is_leveled(&self) -> bool {
        self.edges().all(|(v, w)| self.level(w) == self.level(v) + 1)
    }

    /// True when the graph is a single directed path.
    pub fn is_path(&self) -> bool {
        self.initial.len() == 1 && self.max_degree() <= 1 && self.edge_count + 1 == self.len()
    }

    /// Replaces every edge `(v, w)` spanning `g = ℓ(w) - ℓ(v) > 1` levels by a
    /// path of `g` edges through `g - 1` relays. Slot positions are preserved.
    pub fn to_leveled(&self) -> TaskGraph {
        if self.is_leveled() {
            return self.clone();
        }
        let mut kinds = self.kinds.clone();
        let mut preds = self.preds.clone();
        let mut succs = self.succs.clone();
        for v in self.tasks() {
            for (slot, &w) in self.succs(v).iter().enumerate() {
                let gap = self.level(w) - self.level(v);
                if gap <= 1 {
                    continue;
                }
                let mut prev = v;
                for k in 0..gap - 1 {
                    let relay = TaskId(kinds.len() as u32);
                    kinds.push(TaskKind::ForwardInput { list: w.0, position: k });
                    preds.push(vec![prev]);
                    succs.push(Vec::new());
                    if prev == v {
                        succs[v.index()][slot] = relay;
                    } else {
                        succs[prev.index()].push(relay);
                    }
                    prev = relay;
                }
                succs[prev.index()].push(w);
                let pslot = self.pred_slot(w, v).expect("edge present in both maps");
                preds[w.index()][pslot] = prev;
            }
        }
        TaskGraph::from_adjacency(kinds, preds, succs).expect("relay insertion keeps the graph acyclic")
    }

    /// Prefixes every initial task with a chain of `⌈c·log₂ n⌉` relays and
    /// suffixes every final task with a chain of `D + ⌈log₂ n⌉` relays, where
    /// `n` is the task count of `self`.
    pub fn extend_with_io_lists(&self, c: u32) -> TaskGraph {
        let n = self.len();
        let head_len = ceil_c_log2(c, n);
        let tail_len = if n <= 1 {
            0
        } else {
            self.span as usize + ceil_c_log2(1, n)
        };
        let mut b = DagBuilder::new();
        for &k in &self.kinds {
            b.add_task(k);
        }
        for &v in &self.initial {
            let mut prev = None;
            for p in 0..head_len {
                let r = b.add_task(TaskKind::ForwardInput {
                    list: v.0,
                    position: p as u32,
                });
                if let Some(u) = prev {
                    b.add_edge(u, r);
                }
                prev = Some(r);
            }
            if let Some(u) = prev {
                b.add_edge(u, v);
            }
        }
        for v in self.tasks() {
            for &w in self.succs(v) {
                b.add_edge(v, w);
            }
        }
        for &v in &self.finals {
            let mut prev = v;
            for p in 0..tail_len {
                let r = b.add_task(TaskKind::ForwardOutput {
                    list: v.0,
                    position: p as u32,
                });
                b.add_edge(prev, r);
                prev = r;
            }
        }
        b.build().expect("list extension keeps the graph acyclic")
    }

    /// Serializable description used by `--dump-graph`.
    pub fn dump(&self) -> GraphDump {
        GraphDump {
            tasks: self
                .tasks()
                .map(|v| TaskEntry {
                    id: v,
                    kind: self.kind(v),
                    level: self.level(v),
                })
                .collect(),
            edges: self.edges().map(|(src, dst)| EdgeEntry { src, dst }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub id: TaskId,
    pub kind: TaskKind,
    pub level: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeEntry {
    pub src: TaskId,
    pub dst: TaskId,
}

/// JSON graph dump: `{"tasks": [{id, kind, level}], "edges": [{src, dst}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDump {
    pub tasks: Vec<TaskEntry>,
    pub edges: Vec<EdgeEntry>,
}
