use std::ops::Range;
use std::sync::Arc;

use rand::Rng;

use crate::adversary::{Corruption, Destination};
use crate::error::Result;
use crate::mergesort::network::{build_mergesort_graph, SortLayout, SortRole};
use crate::mergesort::{
    merge, merge_levels, preprocess, runs_sorted, strictly_sorted, Item, Preprocessed, QuantileSet, RangeSpec,
};
use crate::metrics::Work;
use crate::protocol::{Application, Aux, Execution, SupervisorState, WorkCtx};
use crate::rng::SimRng;
use crate::taskgraph::{TaskGraph, TaskId};
use crate::verify::{ItemTag, Signer, TagVerifier};

/// A sorting instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergesortInstance {
    pub values: Vec<u64>,
    /// Number of blocks (a power of two dividing `m`).
    pub n: usize,
    /// List-length constant.
    pub c: u32,
}

impl MergesortInstance {
    /// `m` uniform 64-bit values.
    pub fn random(m: usize, n: usize, c: u32, rng: &mut SimRng) -> Self {
        Self {
            values: (0..m).map(|_| rng.gen()).collect(),
            n,
            c,
        }
    }

    pub fn m(&self) -> usize {
        self.values.len()
    }
}

/// A stream of items sent along one edge.
pub type Stream = Arc<Vec<Item>>;

/// The sorting application.
#[derive(Debug, Clone)]
pub struct MergesortApp {
    instance: MergesortInstance,
    graph: TaskGraph,
    layout: SortLayout,
    blocks: Vec<Stream>,
    quantiles: QuantileSet,
    verifier: TagVerifier,
}

impl MergesortApp {
    /// Runs the source's preprocessing with `source_rng` (which also draws
    /// the signing key) and builds the sorting DAG.
    pub fn new(instance: MergesortInstance, source_rng: &mut SimRng) -> Result<Self> {
        let (m, n) = (instance.m(), instance.n);
        let (graph, layout) = build_mergesort_graph(n, m, instance.c)?;
        let signer = Signer::random(source_rng);
        let Preprocessed { blocks, quantiles, .. } = preprocess(&instance.values, n, &signer, source_rng)?;
        Ok(Self {
            instance,
            graph,
            layout,
            blocks: blocks.into_iter().map(Arc::new).collect(),
            quantiles,
            verifier: signer.verifier(),
        })
    }

    pub fn layout(&self) -> &SortLayout {
        &self.layout
    }

    pub fn quantiles(&self) -> &QuantileSet {
        &self.quantiles
    }

    pub fn role(&self, v: TaskId) -> SortRole {
        self.layout.roles[v.index()]
    }

    /// Key range of position `p` in layer `i`.
    pub fn range(&self, i: u32, p: usize) -> RangeSpec {
        let (lo, hi) = self.layout.network.range_indices(i, p);
        RangeSpec::cyclic(self.quantiles.key(lo), self.quantiles.key(hi))
    }

    fn last_layer_range(&self, p: usize) -> RangeSpec {
        self.range(self.layout.network.last_layer(), p)
    }

    /// Item indices a task of segment `j` in layer `i` may hold.
    fn index_bounds(&self, i: u32, j: usize) -> (u32, u32) {
        let blocks = self.layout.network.segment_blocks(i, j);
        let b = self.layout.block_size as u32;
        (blocks.start as u32 * b + 1, blocks.end as u32 * b)
    }

    /// Layer and segment of the task whose stream `u` forwards or produces.
    fn origin(&self, u: TaskId) -> (u32, usize) {
        let net = &self.layout.network;
        match self.role(u) {
            SortRole::List { block, .. } | SortRole::Layer0 { block } => (0, block),
            SortRole::Merge { layer, position } => (layer, net.segment(layer, position).0),
            SortRole::Output { .. } => (net.last_layer(), 0),
        }
    }

    fn tags_ok(&self, items: &[Item], work: &mut Work) -> bool {
        work.verify += items.len() as u64;
        items.iter().all(|x| x.verify(&self.verifier))
    }

    fn indices_within(items: &[Item], lo: u32, hi: u32, work: &mut Work) -> bool {
        work.verify += items.len() as u64;
        items.iter().all(|x| (lo..=hi).contains(&x.index))
    }

    /// The block's exact index set, each index once.
    fn exact_block(&self, items: &[Item], block: usize, work: &mut Work) -> bool {
        let b = self.layout.block_size;
        let first = (block * b) as u32 + 1;
        let mut seen = vec![false; b];
        work.verify += items.len() as u64;
        items.len() == b
            && items.iter().all(|x| {
                let off = x.index.wrapping_sub(first) as usize;
                off < b && !std::mem::replace(&mut seen[off], true)
            })
    }

    /// Count, sortedness, tags, segment and range checks on the stream that
    /// predecessor `u` sent to `v`.
    fn stream_ok(
        &self,
        u: TaskId,
        v: Option<TaskId>,
        items: &[Item],
        range: RangeSpec,
        sup: &SupervisorState,
        work: &mut Work,
    ) -> bool {
        let Some(expected) = sup.declared_count(&self.graph, u, v) else {
            return false;
        };
        let (layer, seg) = self.origin(u);
        let (lo, hi) = self.index_bounds(layer, seg);
        items.len() as u64 == expected
            && strictly_sorted(items, work)
            && Self::indices_within(items, lo, hi, work)
            && range.contains_sorted(items, work)
            && self.tags_ok(items, work)
    }

    /// Checks a block arriving at an initial-list or layer-0 task from list task `u`.
    fn block_ok(
        &self,
        (u, v): (TaskId, TaskId),
        items: &[Item],
        block: usize,
        levels_done: u32,
        sup: &SupervisorState,
        work: &mut Work,
    ) -> bool {
        sup.declared_count(&self.graph, u, Some(v)) == Some(items.len() as u64)
            && self.exact_block(items, block, work)
            && runs_sorted(items, 1 << levels_done, work)
            && self.tags_ok(items, work)
    }

    fn sort_step(
        &self,
        v: TaskId,
        inputs: &[Option<Stream>],
        block: usize,
        levels: Range<u32>,
        sup: &SupervisorState,
        work: &mut Work,
    ) -> std::result::Result<Vec<Item>, Vec<TaskId>> {
        let preds = self.graph.preds(v);
        let Some(items) = &inputs[0] else {
            return Err(preds.to_vec());
        };
        if let Some(&u) = preds.first() {
            if !self.block_ok((u, v), items, block, levels.start, sup, work) {
                return Err(vec![u]);
            }
        }
        Ok(merge_levels(items, levels.start, levels.end, work))
    }

    fn split_outputs(&self, layer: u32, position: usize, items: Vec<Item>, work: &mut Work) -> Execution<Stream> {
        match self.layout.network.split(layer, position) {
            None => Execution::Done {
                aux: Aux::Counts(vec![items.len() as u64]),
                outputs: vec![Arc::new(items)],
            },
            Some(s) => {
                let (lo, hi) = self.layout.network.range_indices(layer, position);
                let q = |i| self.quantiles.key(i);
                let low = RangeSpec::cyclic(q(lo), q(s.quantile)).select_sorted(&items, work);
                let high = RangeSpec::cyclic(q(s.quantile), q(hi)).select_sorted(&items, work);
                Execution::Done {
                    aux: Aux::Counts(vec![low.len() as u64, high.len() as u64]),
                    outputs: vec![Arc::new(low), Arc::new(high)],
                }
            }
        }
    }

    /// Items the supervisor expects `v` to receive in total.
    fn expected_in(&self, v: TaskId, sup: &SupervisorState) -> Option<u64> {
        if self.graph.is_initial(v) {
            return Some(self.layout.block_size as u64);
        }
        self.graph
            .preds(v)
            .iter()
            .map(|&u| sup.declared_count(&self.graph, u, Some(v)))
            .sum()
    }

    fn forge_item<R: Rng + ?Sized>(&self, rng: &mut R) -> Item {
        Item {
            value: rng.gen(),
            index: rng.gen_range(1..=self.instance.m() as u32),
            tag: ItemTag(rng.gen()),
        }
    }

    fn insert_sorted(items: &mut Vec<Item>, x: Item) {
        let p = items.partition_point(|y| y.key() < x.key());
        items.insert(p, x);
    }
}

impl Application for MergesortApp {
    type Payload = Stream;
    type Output = Vec<u64>;

    fn graph(&self) -> &TaskGraph {
        &self.graph
    }

    fn source_input(&self, v: TaskId) -> Stream {
        match self.role(v) {
            SortRole::List { block, .. } | SortRole::Layer0 { block } => self.blocks[block].clone(),
            other => panic!("source input requested for {other:?}"),
        }
    }

    fn execute(
        &self,
        v: TaskId,
        inputs: &[Option<Stream>],
        sup: &SupervisorState,
        ctx: &mut WorkCtx<'_>,
    ) -> Execution<Stream> {
        let work = &mut *ctx.work;
        match self.role(v) {
            SortRole::List {
                block,
                levels_before,
                levels,
                ..
            } => match self.sort_step(v, inputs, block, levels_before..levels_before + levels, sup, work) {
                Ok(items) => Execution::Done {
                    aux: Aux::Counts(vec![items.len() as u64]),
                    outputs: vec![Arc::new(items)],
                },
                Err(bad) => Execution::Reject(bad),
            },
            SortRole::Layer0 { block } => {
                let before = self.layout.levels_before_layer0();
                let rest = self.layout.block_levels - before;
                match self.sort_step(v, inputs, block, before..before + rest, sup, work) {
                    Ok(items) => self.split_outputs(0, block, items, work),
                    Err(bad) => Execution::Reject(bad),
                }
            }
            SortRole::Merge { layer, position } => {
                let preds = self.graph.preds(v);
                let range = self.range(layer, position);
                let bad: Vec<TaskId> = preds
                    .iter()
                    .zip(inputs)
                    .filter(|(&u, s)| match s {
                        Some(items) => !self.stream_ok(u, Some(v), items, range, sup, work),
                        None => true,
                    })
                    .map(|(&u, _)| u)
                    .collect();
                if !bad.is_empty() {
                    return Execution::Reject(bad);
                }
                let (Some(a), Some(b)) = (&inputs[0], &inputs[1]) else {
                    unreachable!("both inputs checked")
                };
                let merged = merge(a, b, work);
                self.split_outputs(layer, position, merged, work)
            }
            SortRole::Output { position, .. } => {
                let u = self.graph.preds(v)[0];
                match &inputs[0] {
                    Some(items) if self.stream_ok(u, Some(v), items, self.last_layer_range(position), sup, work) => {
                        Execution::Done {
                            aux: Aux::Counts(vec![items.len() as u64]),
                            outputs: vec![items.clone()],
                        }
                    }
                    _ => Execution::Reject(vec![u]),
                }
            }
        }
    }

    fn check_done(&self, v: TaskId, aux: &Aux, sup: &SupervisorState) -> bool {
        let Some(counts) = aux.counts() else {
            return false;
        };
        counts.len() == self.graph.succs(v).len().max(1) && self.expected_in(v, sup) == Some(counts.iter().sum())
    }

    fn target_accepts(&self, v: TaskId, payload: &Stream, sup: &SupervisorState, work: &mut Work) -> bool {
        let Some(p) = self.layout.output_position(v) else {
            return false;
        };
        self.stream_ok(v, None, payload, self.last_layer_range(p), sup, work)
    }

    fn assemble(&self, streams: &[&Stream], work: &mut Work) -> std::result::Result<Vec<u64>, Vec<TaskId>> {
        let finals = self.graph.final_tasks();
        let n = self.layout.network.n();
        let mut by_position: Vec<Option<&Stream>> = vec![None; n];
        for (&f, s) in finals.iter().zip(streams) {
            match self.layout.output_position(f) {
                Some(p) => by_position[p] = Some(s),
                None => return Err(finals.to_vec()),
            }
        }
        let Some(by_position) = by_position.into_iter().collect::<Option<Vec<_>>>() else {
            return Err(finals.to_vec());
        };
        let wrap = by_position[n - 1];
        let mut out: Vec<Item> = Vec::with_capacity(self.instance.m());
        let q0 = self.quantiles.key(0);
        let split = if n == 1 {
            0
        } else {
            wrap.partition_point(|x| x.key() < q0)
        };
        out.extend_from_slice(&wrap[..split]);
        for s in &by_position[..n - 1] {
            out.extend_from_slice(s);
        }
        out.extend_from_slice(&wrap[split..]);
        if out.len() != self.instance.m() || !strictly_sorted(&out, work) {
            return Err(finals.to_vec());
        }
        Ok(out.into_iter().map(|x| x.value).collect())
    }

    fn oracle(&self) -> Vec<u64> {
        let mut v = self.instance.values.clone();
        v.sort_unstable();
        v
    }

    fn payload_units(&self, p: &Stream) -> u64 {
        p.len() as u64
    }

    fn hint_units(&self, v: TaskId) -> u64 {
        let ins = self.graph.preds(v).len().max(1) as u64;
        match self.role(v) {
            SortRole::List { .. } => ins,
            SortRole::Layer0 { .. } => ins + 1,
            SortRole::Merge { layer, .. } => {
                let split = u64::from(layer < self.layout.network.last_layer());
                ins + 2 + split
            }
            SortRole::Output { .. } => ins + 2,
        }
    }

    fn tamper_aux(&self, _: TaskId, honest: &Aux, kind: Corruption, _: &mut SimRng) -> Aux {
        let Some(c) = honest.counts() else {
            return honest.clone();
        };
        let mut c = c.to_vec();
        match kind {
            Corruption::CountSkew if c.len() == 2 => {
                if c[0] >= 1 {
                    c[0] -= 1;
                    c[1] += 1;
                } else if c[1] >= 1 {
                    c[0] += 1;
                    c[1] -= 1;
                }
            }
            Corruption::Forge => c[0] += 1,
            _ => {}
        }
        Aux::Counts(c)
    }

    fn corrupt(
        &self,
        _: TaskId,
        slot: usize,
        _: Destination,
        faithful: &[Stream],
        kind: Corruption,
        rng: &mut SimRng,
    ) -> Option<Stream> {
        let mut items: Vec<Item> = faithful[slot].as_ref().clone();
        match kind {
            Corruption::CountSkew if faithful.len() == 2 => {
                // consistent with the skewed declaration: one boundary item
                // moves from the low stream to the high stream or back
                let (low, high) = (&faithful[0], &faithful[1]);
                if !low.is_empty() {
                    let moved = *low.last().expect("nonempty");
                    if slot == 0 {
                        items.pop();
                    } else {
                        Self::insert_sorted(&mut items, moved);
                    }
                } else if !high.is_empty() {
                    let moved = high[0];
                    if slot == 0 {
                        Self::insert_sorted(&mut items, moved);
                    } else {
                        items.remove(0);
                    }
                }
            }
            Corruption::CountSkew => {
                items.pop();
            }
            Corruption::WrongProduct if items.len() >= 2 => {
                let r = rng.gen_range(1..items.len());
                items[r] = items[r - 1];
            }
            Corruption::Forge => {
                let x = self.forge_item(rng);
                Self::insert_sorted(&mut items, x);
            }
            _ => {
                if items.is_empty() {
                    items.push(self.forge_item(rng));
                } else {
                    let r = rng.gen_range(0..items.len());
                    items[r].value ^= rng.gen_range(1..=u64::MAX);
                }
            }
        }
        Some(Arc::new(items))
    }
}
