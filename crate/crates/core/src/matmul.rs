//! Supervised matrix multiplication.
//!
//! `A` is cut into `k` row stripes `A_i` ((m/k)×m) and `B` into `k` column
//! stripes `B_j` (m×(m/k)). Each stripe travels down an input list and a
//! broadcast tree with `k` leaves; multiply task `v_{i,j}` takes leaf `j` of
//! the tree of `A_i` and leaf `i` of the tree of `B_j`, computes
//! `C_{i,j} = A_i B_j`, and hands `(A_i, B_j, C_{i,j})` to output list
//! `O_{i,j}`, whose workers check it with Freivalds' test and report `h(C_{i,j})`.
//! The target accepts a block only if its digest equals the strict majority
//! of the digests reported by the workers currently holding `O_{i,j}`.

use std::sync::Arc;

use rand::Rng;

use crate::adversary::{Corruption, Destination};
use crate::error::{Error, Result};
use crate::metrics::Work;
use crate::protocol::{Application, Aux, Execution, SupervisorState, WorkCtx};
use crate::rng::SimRng;
use crate::taskgraph::{ceil_c_log2, DagBuilder, TaskGraph, TaskId, TaskKind};
use crate::verify::{freivalds, majority_digest, Digest, DigestKey, FieldElem, Matrix};

/// A multiplication instance and its parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatmulInstance {
    pub a: Matrix,
    pub b: Matrix,
    /// Number of stripes per matrix; `n = k²` multiply tasks.
    pub k: usize,
    /// Freivalds repetitions per output-list task.
    pub tau: u32,
    /// List-length constant.
    pub c: u32,
}

impl MatmulInstance {
    pub fn random(m: usize, k: usize, tau: u32, c: u32, rng: &mut SimRng) -> Self {
        Self {
            a: Matrix::random(m, m, rng),
            b: Matrix::random(m, m, rng),
            k,
            tau,
            c,
        }
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    /// Checks the structural constraints of the construction.
    pub fn validate(&self) -> Result<()> {
        let (m, k) = (self.m(), self.k);
        if self.a.shape() != (m, m) || self.b.shape() != (m, m) {
            return Err(Error::Config(format!(
                "A {:?} and B {:?} must be square of the same size",
                self.a.shape(),
                self.b.shape()
            )));
        }
        validate_sizes(m, k)?;
        if self.tau == 0 || self.c == 0 {
            return Err(Error::Config("tau and c must be positive".into()));
        }
        Ok(())
    }
}

/// Checks `k` and `m` without building an instance.
pub fn validate_sizes(m: usize, k: usize) -> Result<()> {
    if k == 0 || !k.is_power_of_two() {
        return Err(Error::Config(format!("k = {k} must be a power of two")));
    }
    if m == 0 || !m.is_multiple_of(k) {
        return Err(Error::Config(format!("k = {k} must divide m = {m}")));
    }
    let n = k * k;
    if m < k * ceil_c_log2(1, n) {
        return Err(Error::Config(format!(
            "m = {m} is below sqrt(n)·log2(n) = {}",
            k * ceil_c_log2(1, n)
        )));
    }
    Ok(())
}

/// Input- and output-list length `max(1, ⌈c·log₂ n⌉)` for `n = k²`.
pub fn list_len(k: usize, c: u32) -> usize {
    ceil_c_log2(c, k * k).max(1)
}

/// Node count of the graph: `2kL + 2k(2k-1) + k² + k²L`.
pub fn node_count(k: usize, c: u32) -> usize {
    let l = list_len(k, c);
    2 * k * l + 2 * k * (2 * k - 1) + k * k + k * k * l
}

/// Which matrix a stripe belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    A,
    B,
}

/// Role of a task in the multiplication DAG.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Input { side: Side, stripe: usize, position: usize },
    Tree { side: Side, stripe: usize, node: usize },
    Multiply { i: usize, j: usize },
    Output { i: usize, j: usize, position: usize },
}

/// Decodes the stripe a list or tree index refers to.
fn side_of(list: usize, k: usize) -> (Side, usize) {
    if list < k {
        (Side::A, list)
    } else {
        (Side::B, list - k)
    }
}

/// Role encoded in a task kind of a graph built by [`build_matmul_graph`].
pub fn role(kind: TaskKind, k: usize) -> Result<Role> {
    Ok(match kind {
        TaskKind::ForwardInput { list, position } => {
            let (side, stripe) = side_of(list as usize, k);
            Role::Input {
                side,
                stripe,
                position: position as usize,
            }
        }
        TaskKind::TreeBroadcast { tree, node } => {
            let (side, stripe) = side_of(tree as usize, k);
            Role::Tree {
                side,
                stripe,
                node: node as usize,
            }
        }
        TaskKind::Multiply { row, col } => Role::Multiply {
            i: row as usize,
            j: col as usize,
        },
        TaskKind::ForwardOutput { list, position } => Role::Output {
            i: list as usize / k,
            j: list as usize % k,
            position: position as usize,
        },
        other => return Err(Error::Config(format!("{other:?} is not a multiplication task"))),
    })
}

/// Task ids of the pieces of the multiplication DAG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatmulLayout {
    pub k: usize,
    pub list_len: usize,
    /// `inputs[s]` is list `I_{A,s}` for `s < k` and `I_{B,s-k}` otherwise.
    pub inputs: Vec<Vec<TaskId>>,
    /// Heap-ordered broadcast trees, indexed like `inputs`.
    pub trees: Vec<Vec<TaskId>>,
    /// `multiply[i][j]` is `v_{i,j}`.
    pub multiply: Vec<Vec<TaskId>>,
    /// `outputs[i * k + j]` is list `O_{i,j}`.
    pub outputs: Vec<Vec<TaskId>>,
}

impl MatmulLayout {
    /// Leaf `l` of tree `t`.
    pub fn leaf(&self, t: usize, l: usize) -> TaskId {
        self.trees[t][self.k - 1 + l]
    }
}

/// Builds the multiplication DAG for `k²` multiply tasks.
pub fn build_matmul_graph(m: usize, k: usize, c: u32) -> Result<(TaskGraph, MatmulLayout)> {
    validate_sizes(m, k)?;
    if c == 0 {
        return Err(Error::Config("c must be positive".into()));
    }
    let l = list_len(k, c);
    let mut b = DagBuilder::new();
    let chain = |b: &mut DagBuilder, make: &dyn Fn(u32) -> TaskKind| -> Vec<TaskId> {
        let ids: Vec<TaskId> = (0..l as u32).map(|p| b.add_task(make(p))).collect();
        for w in ids.windows(2) {
            b.add_edge(w[0], w[1]);
        }
        ids
    };
    let inputs: Vec<Vec<TaskId>> = (0..2 * k as u32)
        .map(|list| chain(&mut b, &|position| TaskKind::ForwardInput { list, position }))
        .collect();
    let trees: Vec<Vec<TaskId>> = (0..2 * k as u32)
        .map(|tree| {
            let nodes: Vec<TaskId> = (0..2 * k as u32 - 1)
                .map(|node| b.add_task(TaskKind::TreeBroadcast { tree, node }))
                .collect();
            for t in 0..k - 1 {
                b.add_edge(nodes[t], nodes[2 * t + 1]);
                b.add_edge(nodes[t], nodes[2 * t + 2]);
            }
            nodes
        })
        .collect();
    for (list, tree) in inputs.iter().zip(&trees) {
        b.add_edge(*list.last().expect("lists are nonempty"), tree[0]);
    }
    let multiply: Vec<Vec<TaskId>> = (0..k as u32)
        .map(|row| {
            (0..k as u32)
                .map(|col| b.add_task(TaskKind::Multiply { row, col }))
                .collect()
        })
        .collect();
    let mut layout = MatmulLayout {
        k,
        list_len: l,
        inputs,
        trees,
        multiply,
        outputs: Vec::new(),
    };
    for i in 0..k {
        for j in 0..k {
            let v = layout.multiply[i][j];
            b.add_edge(layout.leaf(i, j), v);
            b.add_edge(layout.leaf(k + j, i), v);
        }
    }
    for i in 0..k {
        for j in 0..k {
            let list = (i * k + j) as u32;
            let o = chain(&mut b, &|position| TaskKind::ForwardOutput { list, position });
            b.add_edge(layout.multiply[i][j], o[0]);
            layout.outputs.push(o);
        }
    }
    let g = b.build()?;
    if g.max_degree() > 2 {
        return Err(Error::Invariant(format!("degree {} exceeds 2", g.max_degree())));
    }
    Ok((g, layout))
}

/// Data travelling along an edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Block {
    Stripe(Arc<Matrix>),
    Triple {
        a: Arc<Matrix>,
        b: Arc<Matrix>,
        c: Arc<Matrix>,
    },
}

/// The multiplication application.
#[derive(Debug, Clone)]
pub struct MatmulApp {
    instance: MatmulInstance,
    graph: TaskGraph,
    layout: MatmulLayout,
    roles: Vec<Role>,
    stripes_a: Vec<Arc<Matrix>>,
    stripes_b: Vec<Arc<Matrix>>,
    /// Stripe digests fetched from the source and cached by the supervisor.
    digests_a: Vec<Digest>,
    digests_b: Vec<Digest>,
    key: DigestKey,
}

impl MatmulApp {
    pub fn new(instance: MatmulInstance, key: DigestKey) -> Result<Self> {
        instance.validate()?;
        let (m, k) = (instance.m(), instance.k);
        let (graph, layout) = build_matmul_graph(m, k, instance.c)?;
        let roles = graph
            .tasks()
            .map(|v| role(graph.kind(v), k))
            .collect::<Result<Vec<_>>>()?;
        let w = m / k;
        let stripes_a: Vec<Arc<Matrix>> = (0..k).map(|i| Arc::new(instance.a.row_block(i * w, w))).collect();
        let stripes_b: Vec<Arc<Matrix>> = (0..k).map(|j| Arc::new(instance.b.col_block(j * w, w))).collect();
        let digests_a = stripes_a.iter().map(|s| key.digest_matrix(s)).collect();
        let digests_b = stripes_b.iter().map(|s| key.digest_matrix(s)).collect();
        Ok(Self {
            instance,
            graph,
            layout,
            roles,
            stripes_a,
            stripes_b,
            digests_a,
            digests_b,
            key,
        })
    }

    pub fn instance(&self) -> &MatmulInstance {
        &self.instance
    }

    pub fn layout(&self) -> &MatmulLayout {
        &self.layout
    }

    pub fn role(&self, v: TaskId) -> Role {
        self.roles[v.index()]
    }

    fn expected_digest(&self, side: Side, stripe: usize) -> Digest {
        match side {
            Side::A => self.digests_a[stripe],
            Side::B => self.digests_b[stripe],
        }
    }

    fn stripe_ok(&self, m: &Matrix, side: Side, stripe: usize, work: &mut Work) -> bool {
        work.verify += m.len() as u64;
        self.key.digest_matrix(m) == self.expected_digest(side, stripe)
    }

    fn triple_ok(
        &self,
        p: &Block,
        i: usize,
        j: usize,
        work: &mut Work,
    ) -> Option<(Arc<Matrix>, Arc<Matrix>, Arc<Matrix>)> {
        let Block::Triple { a, b, c } = p else {
            return None;
        };
        let w = self.instance.m() / self.instance.k;
        if c.shape() != (w, w) {
            return None;
        }
        if !self.stripe_ok(a, Side::A, i, work) || !self.stripe_ok(b, Side::B, j, work) {
            return None;
        }
        Some((a.clone(), b.clone(), c.clone()))
    }

    /// Digest of the deterministic wrong block an adversary sends for `(i, j)`.
    fn wrong_block(c: &Matrix) -> Matrix {
        let mut bad = c.clone();
        bad.set(0, 0, bad.get(0, 0) + FieldElem::ONE);
        bad
    }

    fn perturb_random(m: &Matrix, rng: &mut SimRng) -> Matrix {
        let mut bad = m.clone();
        if bad.is_empty() {
            return bad;
        }
        let (r, c) = (rng.gen_range(0..bad.rows()), rng.gen_range(0..bad.cols()));
        let delta = FieldElem::new(rng.gen_range(1..crate::verify::MODULUS));
        bad.set(r, c, bad.get(r, c) + delta);
        bad
    }
}

impl Application for MatmulApp {
    type Payload = Block;
    type Output = Matrix;

    fn graph(&self) -> &TaskGraph {
        &self.graph
    }

    fn source_input(&self, v: TaskId) -> Block {
        match self.role(v) {
            Role::Input {
                side: Side::A, stripe, ..
            } => Block::Stripe(self.stripes_a[stripe].clone()),
            Role::Input {
                side: Side::B, stripe, ..
            } => Block::Stripe(self.stripes_b[stripe].clone()),
            other => panic!("source input requested for {other:?}"),
        }
    }

    fn execute(
        &self,
        v: TaskId,
        inputs: &[Option<Block>],
        _: &SupervisorState,
        ctx: &mut WorkCtx<'_>,
    ) -> Execution<Block> {
        let g = &self.graph;
        let fanout = g.succs(v).len().max(1);
        match self.role(v) {
            Role::Input { side, stripe, .. } | Role::Tree { side, stripe, .. } => match &inputs[0] {
                Some(p @ Block::Stripe(s)) if self.stripe_ok(s, side, stripe, ctx.work) => Execution::Done {
                    aux: Aux::None,
                    outputs: vec![p.clone(); fanout],
                },
                _ => Execution::Reject(g.preds(v).to_vec()),
            },
            Role::Multiply { i, j } => {
                let preds = g.preds(v);
                let mut bad = Vec::new();
                let mut stripes = [None, None];
                for (slot, (side, stripe)) in [(Side::A, i), (Side::B, j)].into_iter().enumerate() {
                    match &inputs[slot] {
                        Some(Block::Stripe(s)) if self.stripe_ok(s, side, stripe, ctx.work) => {
                            stripes[slot] = Some(s.clone())
                        }
                        _ => bad.push(preds[slot]),
                    }
                }
                if !bad.is_empty() {
                    return Execution::Reject(bad);
                }
                let [Some(a), Some(b)] = stripes else { unreachable!() };
                let c = a.mul(&b, ctx.work).expect("stripe shapes are consistent");
                Execution::Done {
                    aux: Aux::None,
                    outputs: vec![Block::Triple { a, b, c: Arc::new(c) }],
                }
            }
            Role::Output { i, j, .. } => {
                let Some(p) = &inputs[0] else {
                    return Execution::Reject(g.preds(v).to_vec());
                };
                let Some((a, b, c)) = self.triple_ok(p, i, j, ctx.work) else {
                    return Execution::Reject(g.preds(v).to_vec());
                };
                let ok = freivalds(&a, &b, &c, self.instance.tau, ctx.rng, ctx.work).expect("shapes checked");
                if !ok {
                    return Execution::Reject(g.preds(v).to_vec());
                }
                ctx.work.verify += c.len() as u64;
                Execution::Done {
                    aux: Aux::Digest(self.key.digest_matrix(&c)),
                    outputs: vec![p.clone()],
                }
            }
        }
    }

    fn check_done(&self, v: TaskId, aux: &Aux, _: &SupervisorState) -> bool {
        match self.role(v) {
            Role::Output { .. } => matches!(aux, Aux::Digest(_)),
            _ => matches!(aux, Aux::None),
        }
    }

    fn target_accepts(&self, v: TaskId, payload: &Block, sup: &SupervisorState, work: &mut Work) -> bool {
        let Role::Output { i, j, .. } = self.role(v) else {
            return false;
        };
        let reported: Vec<Digest> = self.layout.outputs[i * self.instance.k + j]
            .iter()
            .filter_map(|&o| sup.aux(o).and_then(Aux::digest))
            .collect();
        let Some(h) = majority_digest(&reported) else {
            return false;
        };
        let Block::Triple { c, .. } = payload else {
            return false;
        };
        let w = self.instance.m() / self.instance.k;
        if c.shape() != (w, w) {
            return false;
        }
        work.verify += c.len() as u64;
        self.key.digest_matrix(c) == h
    }

    fn assemble(&self, streams: &[&Block], _: &mut Work) -> Result<Matrix, Vec<TaskId>> {
        let (m, k) = (self.instance.m(), self.instance.k);
        let w = m / k;
        let mut out = Matrix::zeros(m, m);
        for (&f, p) in self.graph.final_tasks().iter().zip(streams) {
            let (Role::Output { i, j, .. }, Block::Triple { c, .. }) = (self.role(f), p) else {
                return Err(vec![f]);
            };
            out.paste(i * w, j * w, c);
        }
        Ok(out)
    }

    fn oracle(&self) -> Matrix {
        self.instance
            .a
            .mul(&self.instance.b, &mut Work::default())
            .expect("square matrices")
    }

    fn payload_units(&self, p: &Block) -> u64 {
        match p {
            Block::Stripe(s) => s.len() as u64,
            Block::Triple { a, b, c } => (a.len() + b.len() + c.len()) as u64,
        }
    }

    fn hint_units(&self, v: TaskId) -> u64 {
        match self.role(v) {
            Role::Input { .. } | Role::Tree { .. } => 1,
            Role::Multiply { .. } | Role::Output { .. } => 2,
        }
    }

    fn tamper_aux(&self, v: TaskId, honest: &Aux, kind: Corruption, rng: &mut SimRng) -> Aux {
        let Role::Output { i, j, .. } = self.role(v) else {
            return honest.clone();
        };
        match kind {
            Corruption::Forge => Aux::Digest(Digest(rng.gen())),
            _ => {
                let c = self.stripes_a[i]
                    .mul(&self.stripes_b[j], &mut Work::default())
                    .expect("stripe shapes are consistent");
                Aux::Digest(self.key.digest_matrix(&Self::wrong_block(&c)))
            }
        }
    }

    fn corrupt(
        &self,
        _: TaskId,
        slot: usize,
        _: Destination,
        faithful: &[Block],
        kind: Corruption,
        rng: &mut SimRng,
    ) -> Option<Block> {
        let p = &faithful[slot];
        Some(match (p, kind) {
            (Block::Stripe(s), Corruption::Forge) => Block::Stripe(Arc::new(Matrix::random(s.rows(), s.cols(), rng))),
            (Block::Stripe(s), Corruption::WrongProduct) => Block::Stripe(Arc::new(Self::wrong_block(s))),
            (Block::Stripe(s), _) => Block::Stripe(Arc::new(Self::perturb_random(s, rng))),
            (Block::Triple { a, b, c }, Corruption::Forge) => Block::Triple {
                a: Arc::new(Matrix::random(a.rows(), a.cols(), rng)),
                b: Arc::new(Matrix::random(b.rows(), b.cols(), rng)),
                c: Arc::new(Matrix::random(c.rows(), c.cols(), rng)),
            },
            (Block::Triple { a, b, c }, Corruption::WrongProduct) => Block::Triple {
                a: a.clone(),
                b: b.clone(),
                c: Arc::new(Self::wrong_block(c)),
            },
            (Block::Triple { a, b, c }, _) => Block::Triple {
                a: a.clone(),
                b: b.clone(),
                c: Arc::new(Self::perturb_random(c, rng)),
            },
        })
    }
}
