//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::Rng;
use supervised::adversary::{builtin_strategies, make_strategy, StrategySpec};
use supervised::compute::{random_leveled_dag, ComputeApp};
use supervised::harness::{run_experiment, AppKind, Batch, Ceilings, DagShape, ExperimentConfig, RoundsWithin};
use supervised::matmul::build_matmul_graph;
use supervised::mergesort::{build_mergesort_graph, SortNetwork};
use supervised::metrics::Work;
use supervised::protocol::{Engine, EngineConfig, Mode, SupervisorState, TargetPolicy};
use supervised::rng::{stream, Stream};
use supervised::taskgraph::{DagBuilder, TaskGraph, TaskId, TaskKind};
use supervised::verify::{freivalds, freivalds_once, Matrix};

const P: u128 = (1u128 << 61) - 1;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Every batch run by the suite, for the safety criterion.
#[derive(Default)]
struct Ledger {
    runs: usize,
    terminated: usize,
    incorrect: usize,
}

impl Ledger {
    fn run(&mut self, cfg: &ExperimentConfig) -> Batch {
        let b = run_experiment(cfg).unwrap_or_else(|e| panic!("batch failed: {e}"));
        self.runs += b.summary.trials;
        self.terminated += b.summary.terminated;
        self.incorrect += b.summary.incorrect;
        b
    }
}

fn strategies() -> Vec<&'static str> {
    builtin_strategies().into_iter().map(|s| s.name).collect()
}

fn cfg(app: AppKind, n: usize, beta: f64, strategy: &str, seeds: u64) -> ExperimentConfig {
    ExperimentConfig {
        app,
        n,
        beta,
        strategy: StrategySpec::named(strategy),
        seeds: (0..seeds).collect(),
        ..ExperimentConfig::default()
    }
}

fn failed(b: &Batch) -> String {
    b.verdicts
        .iter()
        .filter(|v| !v.pass)
        .map(|v| format!("{}={} (limit {})", v.name, v.observed, v.limit))
        .collect::<Vec<_>>()
        .join(", ")
}

fn stat_max(b: &Batch, key: &str) -> f64 {
    b.summary.stats.get(key).map_or(0.0, |s| s.max)
}

fn stat_mean(b: &Batch, key: &str) -> f64 {
    b.summary.stats.get(key).map_or(0.0, |s| s.mean)
}

/// Criteria 1 to 3 share one set of path batches.
fn path_criteria(ledger: &mut Ledger) -> [Verdict; 3] {
    let (n, beta) = (1000usize, 1.0 / 12.0);
    let bound = (n as f64 + 4.0 * beta / (1.0 - 4.0 * beta) * n as f64 + 100.0).floor() as u64;
    let sends = 1.0 / (1.0 - 7.0 * beta) + 0.2;
    let start = Instant::now();
    let mut batches = Vec::new();
    for s in ["always-reject", "silent", "corrupt-output", "random-mix"] {
        let mut c = cfg(AppKind::Path, n, beta, s, 200);
        c.ceilings = Ceilings {
            rounds_within: Some(RoundsWithin {
                bound,
                min_fraction: 0.99,
            }),
            mean_source_sends: Some(sends),
            mean_target_receives: Some(1.5),
            ..Ceilings::default()
        };
        batches.push((s, ledger.run(&c)));
    }
    let secs = start.elapsed().as_secs_f64();
    let pick = |name: &str| -> (bool, String) {
        let mut ok = true;
        let mut parts = Vec::new();
        for (s, b) in &batches {
            let v = b
                .verdicts
                .iter()
                .find(|v| v.name.starts_with(name))
                .expect("configured verdict");
            ok &= v.pass;
            parts.push(format!("{s} {:.4}", v.observed));
        }
        (ok, parts.join(", "))
    };
    let (ok1, d1) = pick("fraction_within");
    let (ok2, d2) = pick("mean_source_sends");
    let (ok3, d3) = pick("mean_target_receives");
    [
        Verdict::new(
            ok1 && secs < 10.0,
            format!("fraction within {bound} rounds (min 0.99): {d1}; wall time {secs:.2}s (limit 10s)"),
        ),
        Verdict::new(ok2, format!("mean source sends (limit {sends:.4}): {d2}")),
        Verdict::new(ok3, format!("mean target receives (limit 1.5): {d3}")),
    ]
}

fn c4(ledger: &mut Ledger) -> Verdict {
    let len = (4.0 * (256f64).ln()).ceil() as usize;
    let mut ok = true;
    let mut parts = Vec::new();
    for s in strategies() {
        let mut c = cfg(AppKind::Path, len, 0.1, s, 500);
        c.ceilings.min_honest_majority_fraction = Some(0.99);
        c.ceilings.require_terminated = true;
        let b = ledger.run(&c);
        ok &= b.pass;
        parts.push(format!("{s} {}/500", b.summary.honest_majority));
        if !b.pass {
            parts.push(failed(&b));
        }
    }
    Verdict::new(
        ok,
        format!("path length {len}, honest majority (min 99%): {}", parts.join(", ")),
    )
}

fn c5(ledger: &mut Ledger) -> Verdict {
    let len = 2 * 8;
    let mut ok = true;
    let mut parts = Vec::new();
    for s in strategies() {
        let mut c = cfg(AppKind::Path, len, 1.0 / 12.0, s, 200);
        c.target = TargetPolicy::AlwaysReject;
        c.round_cap = Some(256);
        c.ceilings.mean_source_sends = Some(2.0);
        let b = ledger.run(&c);
        ok &= b.pass;
        parts.push(format!("{s} {:.3}", stat_mean(&b, "source_sends_per_initial")));
    }
    Verdict::new(
        ok,
        format!(
            "path length {len}, 256 rounds, refusing target, mean source sends (limit 2): {}",
            parts.join(", ")
        ),
    )
}

fn c6(ledger: &mut Ledger) -> Verdict {
    let (depth, width) = (64usize, 8usize);
    let n = (depth + 1) * width;
    let bound = 8 * (depth as u64 + (n as f64).log2().ceil() as u64);
    let mut ok = true;
    let mut worst = 0.0f64;
    for s in strategies() {
        let mut c = cfg(AppKind::Dag, n, 1.0 / 200.0, s, 100);
        c.dag = Some(DagShape {
            depth,
            width,
            degree: 2,
        });
        c.ceilings.max_rounds = Some(bound);
        let b = ledger.run(&c);
        ok &= b.pass;
        worst = worst.max(stat_max(&b, "rounds"));
    }
    Verdict::new(
        ok,
        format!("{n} tasks, span {depth}, worst rounds {worst} (limit {bound}) over 8 strategies x 100 seeds"),
    )
}

fn rows(m: &Matrix) -> Vec<Vec<u128>> {
    (0..m.rows())
        .map(|r| m.row(r).iter().map(|x| x.value() as u128).collect())
        .collect()
}

fn product(a: &Matrix, b: &Matrix) -> Vec<Vec<u128>> {
    let (a, b) = (rows(a), rows(b));
    (0..a.len())
        .map(|i| {
            (0..b[0].len())
                .map(|j| (0..b.len()).fold(0, |s, t| (s + a[i][t] * b[t][j]) % P))
                .collect()
        })
        .collect()
}

fn matrix(v: &[Vec<u128>]) -> Matrix {
    Matrix::from_u64_rows(
        &v.iter()
            .map(|r| r.iter().map(|&x| x as u64).collect())
            .collect::<Vec<_>>(),
    )
    .unwrap()
}

/// A wrong product differing from `A·B` in one random entry: the hardest
/// case, accepted by exactly half of all vectors.
fn one_off(d: usize, inner: usize, rng: &mut impl Rng) -> (Matrix, Matrix, Matrix) {
    let a = Matrix::random(d, inner, rng);
    let b = Matrix::random(inner, d, rng);
    let mut c = product(&a, &b);
    let (i, j) = (rng.gen_range(0..d), rng.gen_range(0..d));
    c[i][j] = (c[i][j] + rng.gen_range(1..P)) % P;
    (a, b, matrix(&c))
}

fn c7() -> Verdict {
    let mut rng = stream(7, Stream::Instance);
    let mut worst = 0.0f64;
    let mut exhaustive_ok = true;
    for d in 1..=4usize {
        for inner in [d, 2 * d, 4 * d] {
            for trial in 0..50 {
                let (a, b, c) = if trial % 2 == 0 {
                    one_off(d, inner, &mut rng)
                } else {
                    let a = Matrix::random(d, inner, &mut rng);
                    let b = Matrix::random(inner, d, &mut rng);
                    let c = Matrix::random(d, d, &mut rng);
                    (a, b, c)
                };
                if rows(&c) == product(&a, &b) {
                    continue;
                }
                let accepted = (0..1usize << d)
                    .filter(|mask| {
                        let r: Vec<bool> = (0..d).map(|j| mask >> j & 1 == 1).collect();
                        freivalds_once(&a, &b, &c, &r, &mut Work::default()).unwrap()
                    })
                    .count();
                let rate = accepted as f64 / (1usize << d) as f64;
                worst = worst.max(rate);
                exhaustive_ok &= 2 * accepted <= 1 << d;
            }
        }
    }
    let (instances, tau) = (10_000usize, 10u32);
    let mut accepted = 0usize;
    for _ in 0..instances {
        let d = rng.gen_range(1..=4);
        let (a, b, c) = one_off(d, 2 * d, &mut rng);
        accepted += usize::from(freivalds(&a, &b, &c, tau, &mut rng, &mut Work::default()).unwrap());
    }
    let p = 0.5f64.powi(tau as i32);
    let limit = p + 3.0 * (p * (1.0 - p) / instances as f64).sqrt();
    let rate = accepted as f64 / instances as f64;
    Verdict::new(
        exhaustive_ok && rate <= limit,
        format!(
            "worst exhaustive single-repetition acceptance {worst} (limit 0.5); tau={tau} rate {rate:.6} over {instances} (limit {limit:.6})"
        ),
    )
}

fn c8(ledger: &mut Ledger) -> Verdict {
    let (m, n) = (64usize, 16usize);
    let bound = 12 * 4;
    let mut ok = true;
    let mut worst = 0.0f64;
    let mut notes = Vec::new();
    for s in strategies() {
        let mut c = cfg(AppKind::Matmul, n, 1.0 / 200.0, s, 50);
        c.m = m;
        c.tau = 8;
        c.ceilings.max_rounds = Some(bound);
        let b = ledger.run(&c);
        ok &= b.pass && b.summary.correct == 50;
        worst = worst.max(stat_max(&b, "rounds"));
        if !b.pass {
            notes.push(format!("{s}: {}", failed(&b)));
        }
    }
    let mut honest = cfg(AppKind::Matmul, n, 0.0, "silent", 1);
    honest.m = m;
    honest.tau = 8;
    let limit = 4 * (m as u64).pow(3);
    honest.ceilings.max_mul_adds = Some(limit);
    let hb = ledger.run(&honest);
    ok &= hb.pass;
    let mul = hb.trials[0].metrics.mul_adds;
    Verdict::new(
        ok,
        format!(
            "all outputs equal A*B, worst rounds {worst} (limit {bound}); honest multiply-adds {mul} (limit {limit}){}",
            if notes.is_empty() {
                String::new()
            } else {
                format!("; {}", notes.join("; "))
            }
        ),
    )
}

/// Criteria 9 and 10 share the mergesort batches.
fn sort_criteria(ledger: &mut Ledger) -> [Verdict; 2] {
    let (m, n) = (4096usize, 64usize);
    let rounds = 12 * 6;
    let items = (8.0 * (m / n) as f64 * (n as f64).ln()).floor() as u64;
    let comp_limit = 4.0 * m as f64 * (m as f64).log2();
    let comm_limit = 4.0 * m as f64 * (n as f64).log2();
    let mut ok9 = true;
    let mut ok10 = true;
    let (mut worst_rounds, mut worst_items) = (0.0f64, 0.0f64);
    let (mut worst_comp, mut worst_comm) = (0.0f64, 0.0f64);
    let mut notes = Vec::new();
    for s in strategies() {
        let mut c = cfg(AppKind::Mergesort, n, 1.0 / 200.0, s, 50);
        c.m = m;
        c.ceilings = Ceilings {
            max_rounds: Some(rounds),
            max_per_task_items: Some(items),
            mean_comp_work: Some(2.0 * comp_limit),
            mean_comm_work: Some(2.0 * comm_limit),
            ..Ceilings::default()
        };
        let b = ledger.run(&c);
        let get = |name: &str| b.verdicts.iter().find(|v| v.name == name).is_some_and(|v| v.pass);
        ok9 &= get("max_rounds") && get("max_per_task_items") && get("incorrect_outputs") && b.summary.correct == 50;
        ok10 &= get("mean_comp_work") && get("mean_comm_work");
        worst_rounds = worst_rounds.max(stat_max(&b, "rounds"));
        worst_items = worst_items.max(stat_max(&b, "per_task_max_items"));
        worst_comp = worst_comp.max(stat_mean(&b, "comp_work"));
        worst_comm = worst_comm.max(stat_mean(&b, "comm_work"));
        if !b.pass {
            notes.push(format!("{s}: {}", failed(&b)));
        }
    }
    let mut honest = cfg(AppKind::Mergesort, n, 0.0, "silent", 1);
    honest.m = m;
    honest.ceilings.mean_comp_work = Some(comp_limit);
    honest.ceilings.mean_comm_work = Some(comm_limit);
    let hb = ledger.run(&honest);
    ok10 &= hb.pass;
    let t = &hb.trials[0].metrics;
    [
        Verdict::new(
            ok9,
            format!(
                "all outputs sorted, worst rounds {worst_rounds} (limit {rounds}), worst per-task items {worst_items} (limit {items}){}",
                if notes.is_empty() { String::new() } else { format!("; {}", notes.join("; ")) }
            ),
        ),
        Verdict::new(
            ok10,
            format!(
                "honest comp {} (limit {comp_limit}), comm {} (limit {comm_limit}); worst adversarial means comp {worst_comp:.0} (limit {}), comm {worst_comm:.0} (limit {})",
                t.comp_work.total(),
                t.comm_work.total(),
                2.0 * comp_limit,
                2.0 * comm_limit
            ),
        ),
    ]
}

fn arb_dag() -> impl Strategy<Value = TaskGraph> {
    (1usize..20, prop::collection::vec(prop::bool::weighted(0.25), 1..200)).prop_map(|(n, mask)| {
        let mut b = DagBuilder::new();
        for _ in 0..n {
            b.add_task(TaskKind::Generic);
        }
        let mut k = 0;
        for j in 0..n {
            for i in 0..j {
                if mask[k % mask.len()] {
                    b.add_edge(TaskId(i as u32), TaskId(j as u32));
                }
                k += 1;
            }
        }
        b.build().unwrap()
    })
}

fn brute_wavefront(g: &TaskGraph, sup: &SupervisorState) -> BTreeSet<TaskId> {
    g.tasks()
        .filter(|&v| !sup.is_finished(v) && g.preds(v).iter().all(|&u| sup.is_finished(u)))
        .collect()
}

fn brute_closed(g: &TaskGraph, sup: &SupervisorState) -> bool {
    g.tasks()
        .filter(|&v| sup.is_finished(v))
        .all(|v| g.preds(v).iter().all(|&u| sup.is_finished(u)))
}

fn brute_leveled(g: &TaskGraph) -> bool {
    g.edges().all(|(u, v)| g.level(u) + 1 == g.level(v))
}

fn reverse(j: usize, bits: u32) -> usize {
    (0..bits).fold(0, |r, b| r | ((j >> b) & 1) << (bits - 1 - b))
}

fn c12() -> Verdict {
    let mut runner = TestRunner::new(Config {
        cases: 200,
        failure_persistence: None,
        ..Config::default()
    });
    let mut notes = Vec::new();

    let leveled = runner.run(&(arb_dag(), 1u32..4), |(g, c)| {
        let h = g.to_leveled();
        prop_assert!(brute_leveled(&h));
        prop_assert!(brute_leveled(&h.extend_with_io_lists(c)));
        Ok(())
    });
    let builtins = [(64usize, 1usize), (64, 2), (64, 4), (128, 8)]
        .iter()
        .all(|&(m, k)| brute_leveled(&build_matmul_graph(m, k, 1).unwrap().0))
        && [(64usize, 8usize), (4096, 64), (2048, 256)]
            .iter()
            .all(|&(m, n)| brute_leveled(&build_mergesort_graph(n, m, 1).unwrap().0))
        && brute_leveled(&random_leveled_dag(64, 8, 2, &mut stream(1, Stream::Instance)).unwrap());
    notes.push(format!(
        "leveled networks: {}",
        if leveled.is_ok() && builtins { "ok" } else { "violated" }
    ));

    let rounds = runner.run(
        &(arb_dag(), 0.0f64..0.5, 0usize..8, any::<u64>()),
        |(g, beta, s, seed)| {
            let g = g.to_leveled();
            let app = ComputeApp::new(g.clone(), seed);
            let strategy = make_strategy(&StrategySpec::named(strategies()[s])).unwrap();
            let mut e = Engine::new(&app, strategy, EngineConfig::new(beta, Mode::Dag, seed)).unwrap();
            let mut steps = 0;
            while !e.terminated() && steps < 500 {
                e.step_round().unwrap();
                steps += 1;
                let sup = e.supervisor();
                prop_assert!(brute_closed(&g, sup));
                prop_assert_eq!(sup.wavefront().collect::<BTreeSet<_>>(), brute_wavefront(&g, sup));
            }
            Ok(())
        },
    );
    notes.push(format!(
        "closure and wavefront after every round: {}",
        if rounds.is_ok() { "ok" } else { "violated" }
    ));

    let mut interleave = true;
    for bits in 0..=8u32 {
        let n = 1usize << bits;
        let net = SortNetwork::new(n).unwrap();
        for i in 0..bits {
            for jj in 0..n >> (i + 1) {
                let fam = |i: u32, j: usize| {
                    (0..1usize << i)
                        .map(|k| reverse(j << i, bits) + k * (n >> i))
                        .collect::<Vec<_>>()
                };
                let net_fam = |i: u32, j: usize| (0..1usize << i).map(|k| net.q(i, j, k)).collect::<Vec<_>>();
                let (even, odd, parent) = (net_fam(i, 2 * jj), net_fam(i, 2 * jj + 1), net_fam(i + 1, jj));
                let woven: Vec<usize> = even.iter().zip(&odd).flat_map(|(a, b)| [*a, *b]).collect();
                interleave &= even == fam(i, 2 * jj) && odd == fam(i, 2 * jj + 1) && woven == parent;
            }
        }
    }
    notes.push(format!(
        "quantile interleaving n <= 256: {}",
        if interleave { "ok" } else { "violated" }
    ));
    if let Err(e) = &leveled {
        notes.push(format!("leveling counterexample: {e}"));
    }
    if let Err(e) = &rounds {
        notes.push(format!("round counterexample: {e}"));
    }
    Verdict::new(
        leveled.is_ok() && builtins && rounds.is_ok() && interleave,
        notes.join("; "),
    )
}

fn main() -> ExitCode {
    let mut ledger = Ledger::default();
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let [v1, v2, v3] = path_criteria(&mut ledger);
    results.push((1, "path runtime", v1));
    results.push((2, "path source sends", v2));
    results.push((3, "path target receives", v3));
    results.push((4, "majority on short path", c4(&mut ledger)));
    results.push((5, "refusing target", c5(&mut ledger)));
    results.push((6, "dag runtime", c6(&mut ledger)));
    results.push((7, "freivalds soundness", c7()));
    results.push((8, "matmul end to end", c8(&mut ledger)));
    let [v9, v10] = sort_criteria(&mut ledger);
    results.push((9, "mergesort end to end", v9));
    results.push((10, "mergesort work ceilings", v10));
    results.push((
        11,
        "safety",
        Verdict::new(
            ledger.incorrect == 0,
            format!(
                "{} incorrect among {} terminated of {} runs",
                ledger.incorrect, ledger.terminated, ledger.runs
            ),
        ),
    ));
    results.sort_by_key(|r| r.0);
    results.push((12, "structural invariants", c12()));
    let mut all = true;
    for (i, name, v) in &results {
        all &= v.pass;
        println!("{} C{i} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
