//! Sorting network structure and end-to-end sorting under attack.

use std::collections::BTreeSet;

use proptest::prelude::*;
use supervised::adversary::{builtin_strategies, make_strategy, StrategySpec};
use supervised::mergesort::{
    bit_reversal, build_mergesort_graph, Item, MergesortApp, MergesortInstance, RangeSpec, SortNetwork, SortRole,
};
use supervised::metrics::Work;
use supervised::protocol::{reference_run, Application, Engine, EngineConfig, Mode};
use supervised::rng::{stream, Stream};

/// Bit reversal by string manipulation.
fn reverse(j: usize, bits: u32) -> usize {
    if bits == 0 {
        return 0;
    }
    let s: String = format!("{j:0w$b}", w = bits as usize).chars().rev().collect();
    usize::from_str_radix(&s, 2).unwrap()
}

fn family(net: &SortNetwork, i: u32, j: usize) -> Vec<usize> {
    (0..1usize << i).map(|k| net.q(i, j, k)).collect()
}

#[test]
fn bit_reversal_matches_string_oracle() {
    for bits in 0..=9u32 {
        let n = 1usize << bits;
        let mut seen = BTreeSet::new();
        for j in 0..n {
            let r = bit_reversal(j, n).unwrap();
            assert_eq!(r, reverse(j, bits));
            seen.insert(r);
        }
        assert_eq!(seen.len(), n);
    }
    assert!(bit_reversal(8, 8).is_err());
    assert!(bit_reversal(0, 6).is_err());
}

#[test]
fn quantile_families_interleave_up_to_256() {
    for bits in 0..=8u32 {
        let n = 1usize << bits;
        let net = SortNetwork::new(n).unwrap();
        for i in 0..=bits {
            let segments = n >> i;
            let mut all: Vec<usize> = (0..segments).flat_map(|j| family(&net, i, j)).collect();
            all.sort_unstable();
            assert_eq!(
                all,
                (0..n).collect::<Vec<_>>(),
                "layer {i} families partition the quantiles"
            );
            for j in 0..segments {
                let f = family(&net, i, j);
                assert!(f.windows(2).all(|w| w[0] < w[1]), "family is increasing");
                let stride = n >> i;
                assert!(f.iter().all(|&x| x % stride == reverse(j << i, bits) % stride.max(1)));
            }
            if i < bits {
                for jj in 0..segments / 2 {
                    let (even, odd) = (family(&net, i, 2 * jj), family(&net, i, 2 * jj + 1));
                    let parent = family(&net, i + 1, jj);
                    let woven: Vec<usize> = even.iter().zip(&odd).flat_map(|(a, b)| [*a, *b]).collect();
                    assert_eq!(woven, parent, "n={n} i={i} j={jj}");
                }
            }
        }
    }
}

fn item(value: u64, index: u32) -> Item {
    Item {
        value,
        index,
        tag: supervised::verify::ItemTag(0),
    }
}

proptest! {
    #[test]
    fn range_select_matches_filter(values in prop::collection::vec(0u64..50, 0..60), lo in (0u64..50, 0u32..3), hi in (0u64..50, 0u32..3)) {
        let mut items: Vec<Item> = values.iter().enumerate().map(|(i, &v)| item(v, i as u32)).collect();
        items.sort_by_key(Item::key);
        let r = RangeSpec::cyclic(lo, hi);
        let brute: Vec<Item> = items
            .iter()
            .copied()
            .filter(|x| if lo < hi { lo <= x.key() && x.key() < hi } else if lo > hi { x.key() >= lo || x.key() < hi } else { true })
            .collect();
        let picked = r.select_sorted(&items, &mut Work::default());
        prop_assert_eq!(&picked, &brute);
        prop_assert!(r.contains_sorted(&brute, &mut Work::default()));
        prop_assert_eq!(r.contains_sorted(&items, &mut Work::default()), brute.len() == items.len());
        let other = RangeSpec::cyclic(hi, lo).select_sorted(&items, &mut Work::default());
        if lo != hi {
            prop_assert_eq!(picked.len() + other.len(), items.len());
        }
    }
}

fn app(m: usize, n: usize, c: u32, seed: u64) -> MergesortApp {
    let inst = MergesortInstance::random(m, n, c, &mut stream(seed, Stream::Instance));
    MergesortApp::new(inst, &mut stream(seed, Stream::Source)).unwrap()
}

#[test]
fn task_ranges_partition_keys_within_each_segment() {
    let a = app(1024, 32, 1, 3);
    let net = a.layout().network;
    let keys: Vec<_> = a
        .quantiles()
        .items()
        .iter()
        .map(Item::key)
        .chain([(0, 0), (u64::MAX, u32::MAX)])
        .collect();
    for i in 0..=net.last_layer() {
        for j in 0..net.n() >> i {
            for &k in &keys {
                let holders = (0..1usize << i)
                    .filter(|&t| a.range(i, (j << i) + t).contains(k))
                    .count();
                assert_eq!(holders, 1, "layer {i} segment {j}");
            }
        }
    }
}

#[test]
fn honest_layers_conserve_and_place_items() {
    let (m, n) = (2048, 64);
    let a = app(m, n, 1, 4);
    let r = reference_run(&a, 4).unwrap();
    let layout = a.layout();
    let net = layout.network;
    for (i, layer) in layout.layers.iter().enumerate() {
        let mut seen = BTreeSet::new();
        for (p, &v) in layer.iter().enumerate() {
            let range = a.range(i as u32, p);
            let (j, _) = net.segment(i as u32, p);
            let blocks = net.segment_blocks(i as u32, j);
            let b = (m / n) as u32;
            for out in &r.outputs[v.index()] {
                for x in out.iter() {
                    assert!(range.contains(x.key()));
                    assert!(x.index > blocks.start as u32 * b && x.index <= blocks.end as u32 * b);
                    assert!(seen.insert(x.index), "item {} twice in layer {i}", x.index);
                }
            }
        }
        assert_eq!(seen.len(), m, "layer {i} conserves items");
    }
}

#[test]
fn honest_load_stays_near_block_size() {
    let (m, n) = (4096, 64);
    let bound = 8.0 * (m / n) as f64 * (n as f64).ln();
    for seed in 0..10 {
        let a = app(m, n, 1, seed);
        let strategy = make_strategy(&StrategySpec::named("silent")).unwrap();
        let out = Engine::new(&a, strategy, EngineConfig::new(0.0, Mode::Dag, seed))
            .unwrap()
            .run(1_000)
            .unwrap();
        assert_eq!(out.correct, Some(true));
        assert!((out.metrics.per_task_max_items as f64) <= bound);
        assert_eq!(out.rounds_used, a.graph().span() as u64 + 1);
    }
}

#[test]
fn list_levels_split_block_sorting() {
    let (g, layout) = build_mergesort_graph(64, 4096, 2).unwrap();
    assert!(g.is_leveled());
    let total: u32 = layout.lists[0]
        .iter()
        .map(|&t| match layout.roles[t.index()] {
            SortRole::List { levels, .. } => levels,
            _ => unreachable!(),
        })
        .sum();
    assert_eq!(total, layout.levels_before_layer0());
    assert!(total <= layout.block_levels);
}

/// Safety holds at every β; termination is only expected for small β.
#[test]
fn every_strategy_is_harmless_at_any_beta() {
    let a = app(512, 16, 1, 8);
    for s in builtin_strategies() {
        for (seed, beta) in [(0, 0.005), (1, 0.1), (2, 0.3), (3, 0.5)] {
            let mut cfg = EngineConfig::new(beta, Mode::Dag, seed);
            cfg.check_invariants = true;
            let strategy = make_strategy(&StrategySpec::named(s.name)).unwrap();
            let out = Engine::new(&a, strategy, cfg).unwrap().run(20_000).unwrap();
            assert_ne!(out.correct, Some(false), "{} seed {seed} beta {beta}", s.name);
            if beta <= 0.1 {
                assert!(out.terminated, "{} seed {seed} beta {beta}", s.name);
            }
        }
    }
}

#[test]
fn count_cheating_is_caught_and_retried() {
    let a = app(1024, 32, 1, 12);
    for seed in 0..10 {
        let strategy = make_strategy(&StrategySpec::named("count-cheat")).unwrap();
        let out = Engine::new(&a, strategy, EngineConfig::new(0.25, Mode::Dag, seed))
            .unwrap()
            .run(10_000)
            .unwrap();
        assert_eq!(out.correct, Some(true));
        assert!(out.metrics.adversarial_executions > 0);
        assert!(out.metrics.executions > a.graph().len() as u64);
    }
}

#[test]
fn ties_and_tiny_instances_sort() {
    let cases: Vec<(Vec<u64>, usize)> = vec![
        (vec![5; 64], 8),
        ((0..64).rev().collect(), 8),
        (vec![3], 1),
        (vec![2, 1], 2),
        ((0..48).map(|x| x % 3).collect(), 4),
    ];
    for (values, n) in cases {
        let mut expected = values.clone();
        expected.sort_unstable();
        let inst = MergesortInstance { values, n, c: 2 };
        let a = MergesortApp::new(inst, &mut stream(1, Stream::Source)).unwrap();
        for beta in [0.0, 0.2] {
            let strategy = make_strategy(&StrategySpec::named("random-mix")).unwrap();
            let out = Engine::new(&a, strategy, EngineConfig::new(beta, Mode::Dag, 2))
                .unwrap()
                .run(10_000)
                .unwrap();
            assert_eq!(out.target_output.as_ref(), Some(&expected));
        }
    }
}

#[test]
fn rejects_bad_sizes() {
    let mut rng = stream(0, Stream::Instance);
    for (m, n) in [(64, 3), (63, 8), (8, 8), (2048, 512)] {
        let inst = MergesortInstance::random(m, n, 1, &mut rng);
        assert!(MergesortApp::new(inst, &mut rng).is_err(), "m={m} n={n}");
    }
}

#[test]
fn assembled_output_is_checked() {
    let a = app(256, 8, 1, 6);
    let r = reference_run(&a, 6).unwrap();
    let finals = a.graph().final_tasks().to_vec();
    let mut streams: Vec<_> = finals.iter().map(|f| r.outputs[f.index()][0].clone()).collect();
    assert_eq!(
        a.assemble(&streams.iter().collect::<Vec<_>>(), &mut Work::default())
            .unwrap(),
        a.oracle()
    );
    let mut shorter = streams[3].as_ref().clone();
    shorter.pop();
    streams[3] = std::sync::Arc::new(shorter);
    assert_eq!(
        a.assemble(&streams.iter().collect::<Vec<_>>(), &mut Work::default()),
        Err(finals)
    );
}
