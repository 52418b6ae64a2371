use std::ops::Range;

use crate::error::{Error, Result};
use crate::mergesort::{bit_reversal, ceil_log2, validate_sizes};
use crate::taskgraph::{ceil_c_log2, DagBuilder, TaskGraph, TaskId, TaskKind};

/// Topology of the merging network on `n` blocks.
///
/// Position `p` of layer `i` is task `k = p mod 2^i` of segment
/// `j = p / 2^i`. Segment `j` of layer `i` holds the initial blocks
/// `j·2^i .. (j+1)·2^i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SortNetwork {
    n: usize,
    log_n: u32,
}

/// Where a task's items go when it splits: items below the split quantile
/// go to position `low` of the next layer, the rest to `high`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Split {
    pub quantile: usize,
    pub low: usize,
    pub high: usize,
}

impl SortNetwork {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::Config(format!("n = {n} must be a power of two")));
        }
        Ok(Self {
            n,
            log_n: n.trailing_zeros(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Index of the last layer, `log₂ n`.
    pub fn last_layer(&self) -> u32 {
        self.log_n
    }

    /// `(j, k)` for position `p` of layer `i`.
    pub fn segment(&self, i: u32, p: usize) -> (usize, usize) {
        (p >> i, p & ((1 << i) - 1))
    }

    /// Quantile index `q(i, j, k) = r(j·2^i) + k·n/2^i`.
    pub fn q(&self, i: u32, j: usize, k: usize) -> usize {
        bit_reversal(j << i, self.n).expect("segment index in range") + k * (self.n >> i)
    }

    /// Quantile indices `(lo, hi)` bounding the cyclic range of position `p`
    /// in layer `i`; `lo == hi` means the full key space.
    pub fn range_indices(&self, i: u32, p: usize) -> (usize, usize) {
        let (j, k) = self.segment(i, p);
        let kk = 1usize << i;
        (self.q(i, j, k), self.q(i, j, (k + 1) % kk))
    }

    /// Initial blocks whose items a task of segment `j` in layer `i` may hold.
    pub fn segment_blocks(&self, i: u32, j: usize) -> Range<usize> {
        (j << i)..((j + 1) << i)
    }

    /// The split performed by position `p` of layer `i < log₂ n`.
    pub fn split(&self, i: u32, p: usize) -> Option<Split> {
        if i >= self.log_n {
            return None;
        }
        let (j, k) = self.segment(i, p);
        let kk = 1usize << i;
        let base = (j >> 1) << (i + 1);
        Some(if j % 2 == 0 {
            Split {
                quantile: self.q(i, j + 1, k),
                low: base + 2 * k,
                high: base + 2 * k + 1,
            }
        } else {
            Split {
                quantile: self.q(i, j - 1, (k + 1) % kk),
                low: base + 2 * k + 1,
                high: base + (2 * k + 2) % (2 * kk),
            }
        })
    }
}

/// Role of a task in the sorting DAG.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortRole {
    /// Initial-list task of block `block` performing merge levels
    /// `levels_before .. levels_before + levels`.
    List {
        block: usize,
        position: usize,
        levels_before: u32,
        levels: u32,
    },
    /// Layer-0 task of block `block`; finishes sorting and splits.
    Layer0 {
        block: usize,
    },
    Merge {
        layer: u32,
        position: usize,
    },
    /// Final-list task forwarding the output of last-layer position `position`.
    Output {
        position: usize,
        list_position: usize,
    },
}

/// Task ids of the pieces of the sorting DAG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortLayout {
    pub network: SortNetwork,
    pub block_size: usize,
    /// Total bottom-up merge levels needed to sort one block.
    pub block_levels: u32,
    pub list_len: usize,
    /// `lists[j]` is the initial list of block `j`.
    pub lists: Vec<Vec<TaskId>>,
    /// `layers[i][p]` is position `p` of layer `i`.
    pub layers: Vec<Vec<TaskId>>,
    /// `finals[p]` is the final list after last-layer position `p`.
    pub finals: Vec<Vec<TaskId>>,
    pub roles: Vec<SortRole>,
}

impl SortLayout {
    /// Merge levels already done when a block reaches its layer-0 task.
    pub fn levels_before_layer0(&self) -> u32 {
        self.lists
            .first()
            .and_then(|l| l.last())
            .map_or(0, |&t| match self.roles[t.index()] {
                SortRole::List {
                    levels_before, levels, ..
                } => levels_before + levels,
                _ => 0,
            })
    }

    /// Last-layer position whose output a final task carries.
    pub fn output_position(&self, f: TaskId) -> Option<usize> {
        match self.roles[f.index()] {
            SortRole::Output { position, .. } => Some(position),
            SortRole::Merge { layer, position } if layer == self.network.last_layer() => Some(position),
            SortRole::Layer0 { block } if self.network.last_layer() == 0 => Some(block),
            _ => None,
        }
    }
}

/// Builds the sorting DAG: an initial list of `⌈c·log₂ n⌉` partial-sort
/// tasks per block, layer 0, `log₂ n` merge layers, and a final list of
/// `⌈c·log₂ n⌉` relays per last-layer task.
pub fn build_mergesort_graph(n: usize, m: usize, c: u32) -> Result<(TaskGraph, SortLayout)> {
    validate_sizes(m, n)?;
    if c == 0 {
        return Err(Error::Config("c must be positive".into()));
    }
    let network = SortNetwork::new(n)?;
    let block_size = m / n;
    let block_levels = ceil_log2(block_size);
    let list_len = ceil_c_log2(c, n);
    let per_task = if list_len == 0 {
        0
    } else {
        (block_levels as usize).div_ceil(list_len).max(1) as u32
    };
    let mut b = DagBuilder::new();
    let mut roles = Vec::new();
    let mut add = |b: &mut DagBuilder, kind: TaskKind, role: SortRole| {
        roles.push(role);
        b.add_task(kind)
    };

    let mut lists = Vec::with_capacity(n);
    for j in 0..n {
        let mut list = Vec::with_capacity(list_len);
        for t in 0..list_len {
            let before = (t as u32 * per_task).min(block_levels);
            let after = ((t as u32 + 1) * per_task).min(block_levels);
            let id = add(
                &mut b,
                TaskKind::SortPartial {
                    block: j as u32,
                    position: t as u32,
                    levels_before: before,
                    levels: after - before,
                },
                SortRole::List {
                    block: j,
                    position: t,
                    levels_before: before,
                    levels: after - before,
                },
            );
            list.push(id);
        }
        lists.push(list);
    }
    let mut layers = Vec::with_capacity(network.last_layer() as usize + 1);
    layers.push(
        (0..n)
            .map(|j| {
                add(
                    &mut b,
                    TaskKind::Layer0Split { block: j as u32 },
                    SortRole::Layer0 { block: j },
                )
            })
            .collect::<Vec<_>>(),
    );
    for i in 1..=network.last_layer() {
        layers.push(
            (0..n)
                .map(|p| {
                    add(
                        &mut b,
                        TaskKind::MergeSplit {
                            layer: i,
                            position: p as u32,
                        },
                        SortRole::Merge { layer: i, position: p },
                    )
                })
                .collect(),
        );
    }
    let mut finals = Vec::with_capacity(n);
    for p in 0..n {
        let mut list = Vec::with_capacity(list_len);
        for t in 0..list_len {
            let id = add(
                &mut b,
                TaskKind::ForwardOutput {
                    list: p as u32,
                    position: t as u32,
                },
                SortRole::Output {
                    position: p,
                    list_position: t,
                },
            );
            list.push(id);
        }
        finals.push(list);
    }

    for (j, list) in lists.iter().enumerate() {
        for w in list.windows(2) {
            b.add_edge(w[0], w[1]);
        }
        if let Some(&tail) = list.last() {
            b.add_edge(tail, layers[0][j]);
        }
    }
    // Even segments first, so every merge task lists its even-segment
    // predecessor in input slot 0.
    for i in 0..network.last_layer() {
        for parity in [0, 1] {
            for p in 0..n {
                let (j, _) = network.segment(i, p);
                if j % 2 != parity {
                    continue;
                }
                let s = network.split(i, p).expect("inner layer");
                let from = layers[i as usize][p];
                b.add_edge(from, layers[i as usize + 1][s.low]);
                b.add_edge(from, layers[i as usize + 1][s.high]);
            }
        }
    }
    let last = &layers[network.last_layer() as usize];
    for (p, list) in finals.iter().enumerate() {
        if let Some(&head) = list.first() {
            b.add_edge(last[p], head);
        }
        for w in list.windows(2) {
            b.add_edge(w[0], w[1]);
        }
    }
    let g = b.build()?;
    if g.max_degree() > 2 {
        return Err(Error::Invariant(format!("degree {} exceeds 2", g.max_degree())));
    }
    Ok((
        g,
        SortLayout {
            network,
            block_size,
            block_levels,
            list_len,
            lists,
            layers,
            finals,
            roles,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_block_labels() {
        let net = SortNetwork::new(8).unwrap();
        // layer 1, segment 0: quantiles q0 and q4
        assert_eq!(net.range_indices(1, 0), (0, 4));
        assert_eq!(net.range_indices(1, 1), (4, 0));
        // layer 0 ranges are full
        assert_eq!(net.range_indices(0, 3), (6, 6));
        // last layer: consecutive quantiles, wrap at the end
        assert_eq!(net.range_indices(3, 2), (2, 3));
        assert_eq!(net.range_indices(3, 7), (7, 0));
        assert_eq!(net.q(1, 0, 1), 4);
    }

    #[test]
    fn splits_cover_children_ranges() {
        for n in [2usize, 4, 8, 16, 32] {
            let net = SortNetwork::new(n).unwrap();
            for i in 0..net.last_layer() {
                for p in 0..n {
                    let s = net.split(i, p).unwrap();
                    let (lo, hi) = net.range_indices(i, p);
                    let (llo, lhi) = net.range_indices(i + 1, s.low);
                    let (hlo, hhi) = net.range_indices(i + 1, s.high);
                    assert_eq!((llo, lhi), (lo, s.quantile), "n={n} i={i} p={p}");
                    assert_eq!((hlo, hhi), (s.quantile, hi), "n={n} i={i} p={p}");
                    let (j, _) = net.segment(i, p);
                    assert_eq!(net.segment(i + 1, s.low).0, j / 2);
                    assert_eq!(net.segment(i + 1, s.high).0, j / 2);
                }
            }
            assert!(net.split(net.last_layer(), 0).is_none());
        }
    }

    #[test]
    fn list_levels_follow_formula() {
        let (g, layout) = build_mergesort_graph(64, 4096, 2).unwrap();
        assert_eq!(layout.list_len, 12);
        assert_eq!(layout.block_levels, 6);
        let levels: Vec<u32> = layout.lists[0]
            .iter()
            .map(|&t| match layout.roles[t.index()] {
                SortRole::List { levels, .. } => levels,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(levels, [1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(layout.levels_before_layer0(), 6);
        assert!(g.is_leveled());
        assert!(g.max_degree() <= 2);
        assert_eq!(g.len(), 64 * 12 + 64 * 7 + 64 * 12);
        assert_eq!(g.span() as usize, 12 + 6 + 12);
    }

    #[test]
    fn small_networks() {
        let (g, layout) = build_mergesort_graph(2, 8, 1).unwrap();
        assert_eq!(layout.layers.len(), 2);
        assert_eq!(
            g.preds(layout.layers[1][0]),
            &[layout.layers[0][0], layout.layers[0][1]]
        );
        assert_eq!(
            g.preds(layout.layers[1][1]),
            &[layout.layers[0][0], layout.layers[0][1]]
        );

        let (g, layout) = build_mergesort_graph(1, 5, 2).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(layout.output_position(TaskId(0)), Some(0));
    }

    #[test]
    fn merge_tasks_take_even_segment_first() {
        let (g, layout) = build_mergesort_graph(16, 256, 1).unwrap();
        let net = layout.network;
        for i in 1..=net.last_layer() {
            for &v in &layout.layers[i as usize] {
                let preds = g.preds(v);
                assert_eq!(preds.len(), 2);
                let seg = |u: TaskId| match layout.roles[u.index()] {
                    SortRole::Merge { layer, position } => net.segment(layer, position).0,
                    SortRole::Layer0 { block } => block,
                    _ => unreachable!(),
                };
                assert_eq!(seg(preds[0]) % 2, 0);
                assert_eq!(seg(preds[1]) % 2, 1);
            }
        }
    }
}
