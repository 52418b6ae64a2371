//! Supervised mergesort.
//!
//! The source permutes and indexes the items, signs them, and samples `n`
//! quantiles. Each of `n` blocks is sorted by an initial list of tasks and a
//! layer-0 task, then `log₂ n` layers of merge tasks combine sorted segments.
//! Task `k` of segment `j` in layer `i` holds the items of the segment that
//! fall into a cyclic key range bounded by the quantiles `q(i,j,k)`, which
//! the bit-reversal assignment makes perfectly interleaved between sibling
//! segments, so every merge task needs only two inputs.

mod app;
mod network;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Work;
use crate::verify::{ItemTag, Signer, TagVerifier};

pub use app::{MergesortApp, MergesortInstance};
pub use network::{build_mergesort_graph, SortLayout, SortNetwork, SortRole, Split};

/// Comparison key: value, then permutation index.
pub type Key = (u64, u32);

/// A signed data item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Item {
    pub value: u64,
    /// Position in the source's random permutation, `1..=m`.
    pub index: u32,
    pub tag: ItemTag,
}

impl Item {
    pub fn signed(value: u64, index: u32, signer: &Signer) -> Self {
        Item {
            value,
            index,
            tag: signer.sign_item(value, index as u64),
        }
    }

    pub fn key(&self) -> Key {
        (self.value, self.index)
    }

    pub fn verify(&self, verifier: &TagVerifier) -> bool {
        verifier.verify_item(self.value, self.index as u64, self.tag)
    }
}

/// `n` sampled items sorted by key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantileSet {
    items: Vec<Item>,
}

impl QuantileSet {
    /// Sorts `items`; keys must be pairwise distinct.
    pub fn new(mut items: Vec<Item>) -> Result<Self> {
        items.sort_by_key(Item::key);
        if items.windows(2).any(|w| w[0].key() == w[1].key()) {
            return Err(Error::Config("quantiles must be distinct".into()));
        }
        Ok(Self { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> &Item {
        &self.items[i]
    }

    pub fn key(&self, i: usize) -> Key {
        self.items[i].key()
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }
}

/// Bit-reversal permutation on `log₂ n` bits.
pub fn bit_reversal(j: usize, n: usize) -> Result<usize> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Config(format!("n = {n} is not a power of two")));
    }
    if j >= n {
        return Err(Error::InvalidSize(format!("index {j} out of range for n = {n}")));
    }
    let bits = n.trailing_zeros();
    Ok(if bits == 0 {
        0
    } else {
        j.reverse_bits() >> (usize::BITS - bits)
    })
}

/// A set of keys: everything, a half-open interval `[lo, hi)`, or the
/// wrap-around range `[lo, +∞) ∪ (-∞, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangeSpec {
    Full,
    Interval { lo: Key, hi: Key },
    Wrap { lo: Key, hi: Key },
}

impl RangeSpec {
    /// The cyclic range from `lo` to `hi`; equal endpoints give the full range.
    pub fn cyclic(lo: Key, hi: Key) -> Self {
        match lo.cmp(&hi) {
            std::cmp::Ordering::Less => RangeSpec::Interval { lo, hi },
            std::cmp::Ordering::Greater => RangeSpec::Wrap { lo, hi },
            std::cmp::Ordering::Equal => RangeSpec::Full,
        }
    }

    pub fn contains(&self, k: Key) -> bool {
        match *self {
            RangeSpec::Full => true,
            RangeSpec::Interval { lo, hi } => lo <= k && k < hi,
            RangeSpec::Wrap { lo, hi } => k >= lo || k < hi,
        }
    }

    /// Whether every item of a key-sorted slice lies in the range.
    pub fn contains_sorted(&self, items: &[Item], work: &mut Work) -> bool {
        let (Some(first), Some(last)) = (items.first(), items.last()) else {
            return true;
        };
        match *self {
            RangeSpec::Full => true,
            RangeSpec::Interval { lo, hi } => {
                work.comparisons += 2;
                first.key() >= lo && last.key() < hi
            }
            RangeSpec::Wrap { lo, hi } => {
                let p = partition(items, hi, work);
                work.comparisons += 1;
                p == items.len() || items[p].key() >= lo
            }
        }
    }

    /// The items of a key-sorted slice that lie in the range, in order.
    pub fn select_sorted(&self, items: &[Item], work: &mut Work) -> Vec<Item> {
        match *self {
            RangeSpec::Full => items.to_vec(),
            RangeSpec::Interval { lo, hi } => {
                let a = partition(items, lo, work);
                let b = partition(items, hi, work);
                items[a..b.max(a)].to_vec()
            }
            RangeSpec::Wrap { lo, hi } => {
                let b = partition(items, hi, work);
                let a = partition(items, lo, work).max(b);
                let mut out = items[..b].to_vec();
                out.extend_from_slice(&items[a..]);
                out
            }
        }
    }
}

/// Number of items with key below `k` in a sorted slice, by binary search.
fn partition(items: &[Item], k: Key, work: &mut Work) -> usize {
    work.comparisons += (usize::BITS - items.len().leading_zeros()) as u64;
    items.partition_point(|x| x.key() < k)
}

/// Whether keys are strictly increasing.
pub fn strictly_sorted(items: &[Item], work: &mut Work) -> bool {
    work.comparisons += items.len().saturating_sub(1) as u64;
    items.windows(2).all(|w| w[0].key() < w[1].key())
}

/// Whether every run of `run` consecutive items (the last may be shorter)
/// has strictly increasing keys.
pub fn runs_sorted(items: &[Item], run: usize, work: &mut Work) -> bool {
    items.chunks(run.max(1)).all(|c| strictly_sorted(c, work))
}

/// Merges two key-sorted slices.
pub fn merge(a: &[Item], b: &[Item], work: &mut Work) -> Vec<Item> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        work.comparisons += 1;
        if a[i].key() < b[j].key() {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Bottom-up mergesort levels `from..to`: before level `t`, aligned runs of
/// `2^t` items are sorted; after it, runs of `2^(t+1)`.
pub fn merge_levels(items: &[Item], from: u32, to: u32, work: &mut Work) -> Vec<Item> {
    let mut cur = items.to_vec();
    for t in from..to {
        let run = 1usize << t;
        let mut next = Vec::with_capacity(cur.len());
        for chunk in cur.chunks(2 * run) {
            let (a, b) = chunk.split_at(run.min(chunk.len()));
            next.extend(merge(a, b, work));
        }
        cur = next;
    }
    cur
}

/// `⌈log₂ x⌉`, zero for `x <= 1`.
pub fn ceil_log2(x: usize) -> u32 {
    if x <= 1 {
        0
    } else {
        usize::BITS - (x - 1).leading_zeros()
    }
}

/// Output of the source's preprocessing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Preprocessed {
    /// Block `j` holds the items with indices `j·m/n + 1 ..= (j+1)·m/n`.
    pub blocks: Vec<Vec<Item>>,
    pub quantiles: QuantileSet,
    /// Quantile index `r(j)` handed to initial node `j`.
    pub assignments: Vec<usize>,
}

/// Checks `n | m`, `n` a power of two and `m ≥ n·⌈log₂ n⌉`.
pub fn validate_sizes(m: usize, n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Config(format!("n = {n} must be a power of two")));
    }
    if m == 0 || !m.is_multiple_of(n) {
        return Err(Error::Config(format!("n = {n} must divide m = {m}")));
    }
    if m < n * ceil_log2(n) as usize {
        return Err(Error::Config(format!("m = {m} is below n·log2(n)")));
    }
    if m > u32::MAX as usize {
        return Err(Error::Config(format!("m = {m} exceeds the index range")));
    }
    Ok(())
}

/// Permutes, indexes and signs the values, splits them into `n` blocks and
/// samples `n` distinct quantiles uniformly without replacement.
pub fn preprocess<R: Rng + ?Sized>(values: &[u64], n: usize, signer: &Signer, rng: &mut R) -> Result<Preprocessed> {
    let m = values.len();
    validate_sizes(m, n)?;
    let mut perm = values.to_vec();
    perm.shuffle(rng);
    let items: Vec<Item> = perm
        .iter()
        .enumerate()
        .map(|(p, &v)| Item::signed(v, p as u32 + 1, signer))
        .collect();
    let picks: Vec<Item> = sample(rng, m, n).into_iter().map(|p| items[p]).collect();
    let quantiles = QuantileSet::new(picks)?;
    let b = m / n;
    let blocks = items.chunks(b).map(<[Item]>::to_vec).collect();
    let assignments = (0..n).map(|j| bit_reversal(j, n)).collect::<Result<_>>()?;
    Ok(Preprocessed {
        blocks,
        quantiles,
        assignments,
    })
}
