use std::collections::BTreeMap;
use std::fs;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::make_strategy;
use crate::compute::{random_leveled_dag, ComputeApp};
use crate::error::{Error, Result};
use crate::harness::config::{AppKind, Ceilings, ExperimentConfig};
use crate::matmul::{MatmulApp, MatmulInstance};
use crate::mergesort::{MergesortApp, MergesortInstance};
use crate::metrics::Metrics;
use crate::protocol::{default_round_cap, Application, Engine, EngineConfig, RoundTrace};
use crate::rng::{stream, Stream};
use crate::taskgraph::{build_path, TaskGraph};
use crate::verify::{DigestKey, Matrix};

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub terminated: bool,
    /// Oracle equality of the target's output; `None` if not terminated.
    pub correct: Option<bool>,
    pub rounds: u64,
    pub round_cap: u64,
    pub tasks: usize,
    pub span: u32,
    pub initial_tasks: usize,
    pub final_tasks: usize,
    /// Source transmissions divided by the number of initial tasks.
    pub source_sends_per_initial: f64,
    /// Target deliveries divided by the number of final tasks.
    pub target_receives_per_final: f64,
    pub honest_holders: usize,
    pub holders: usize,
    pub metrics: Metrics,
}

impl TrialRecord {
    pub fn honest_majority(&self) -> bool {
        2 * self.honest_holders > self.holders
    }
}

/// Per-round trace of one trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub seed: u64,
    pub rounds: Vec<RoundTrace>,
}

/// Distribution of one quantity over the trials. Quantiles use the
/// nearest-rank method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let rank = |q: f64| v[((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Some(Self {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v[0],
            max: v[v.len() - 1],
            p50: rank(0.5),
            p90: rank(0.9),
            p99: rank(0.99),
        })
    }
}

/// Aggregates over a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    pub terminated: usize,
    /// Trials stopped by the round cap.
    pub hit_cap: usize,
    pub correct: usize,
    pub incorrect: usize,
    pub honest_majority: usize,
    pub stats: BTreeMap<String, Stats>,
    pub warnings: Vec<String>,
}

/// A checked ceiling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    /// Observed value: a mean, maximum, fraction or count.
    pub observed: f64,
    /// The configured limit.
    pub limit: f64,
    pub pass: bool,
}

/// Everything a batch produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialRecord>,
    pub summary: Summary,
    pub verdicts: Vec<Verdict>,
    pub pass: bool,
    #[serde(skip)]
    pub traces: Vec<TrialTrace>,
}

/// The task graph a trial with `seed` runs on.
pub fn build_graph(cfg: &ExperimentConfig, seed: u64) -> Result<TaskGraph> {
    cfg.validate()?;
    Ok(match cfg.app {
        AppKind::Path => build_path(cfg.n)?,
        AppKind::Dag => dag_graph(cfg, seed)?,
        AppKind::Matmul => matmul_app(cfg, seed)?.graph().clone(),
        AppKind::Mergesort => mergesort_app(cfg, seed)?.graph().clone(),
    })
}

fn dag_graph(cfg: &ExperimentConfig, seed: u64) -> Result<TaskGraph> {
    let s = cfg
        .dag
        .ok_or_else(|| Error::Config("dag app needs a dag shape".into()))?;
    random_leveled_dag(s.depth, s.width, s.degree, &mut stream(seed, Stream::Instance))
}

fn matmul_app(cfg: &ExperimentConfig, seed: u64) -> Result<MatmulApp> {
    let k = cfg.matmul_k()?;
    let instance = match (&cfg.inputs.a, &cfg.inputs.b) {
        (Some(a), Some(b)) => MatmulInstance {
            a: Matrix::read_dense(fs::File::open(a)?)?,
            b: Matrix::read_dense(fs::File::open(b)?)?,
            k,
            tau: cfg.tau,
            c: cfg.c,
        },
        _ => MatmulInstance::random(cfg.m, k, cfg.tau, cfg.c, &mut stream(seed, Stream::Instance)),
    };
    MatmulApp::new(instance, DigestKey::random(&mut stream(seed, Stream::Source)))
}

/// Parses whitespace-separated unsigned 64-bit values.
pub fn parse_values(text: &str) -> Result<Vec<u64>> {
    text.split_whitespace()
        .map(|t| t.parse().map_err(|e| Error::Config(format!("value '{t}': {e}"))))
        .collect()
}

fn mergesort_app(cfg: &ExperimentConfig, seed: u64) -> Result<MergesortApp> {
    let instance = match &cfg.inputs.values {
        Some(path) => MergesortInstance {
            values: parse_values(&fs::read_to_string(path)?)?,
            n: cfg.n,
            c: cfg.c,
        },
        None => MergesortInstance::random(cfg.m, cfg.n, cfg.c, &mut stream(seed, Stream::Instance)),
    };
    MergesortApp::new(instance, &mut stream(seed, Stream::Source))
}

fn run_app<A: Application>(app: &A, cfg: &ExperimentConfig, seed: u64) -> Result<(TrialRecord, TrialTrace)> {
    let g = app.graph();
    let round_cap = cfg.round_cap.unwrap_or_else(|| default_round_cap(g));
    let engine_cfg = EngineConfig {
        beta: cfg.beta,
        mode: cfg.mode(),
        target: cfg.target,
        seed,
        check_invariants: cfg.check_invariants,
        trace: cfg.trace,
    };
    let out = Engine::new(app, make_strategy(&cfg.strategy)?, engine_cfg)?.run(round_cap)?;
    let (initial, finals) = (g.initial_tasks().len(), g.final_tasks().len());
    let record = TrialRecord {
        seed,
        terminated: out.terminated,
        correct: out.correct,
        rounds: out.rounds_used,
        round_cap,
        tasks: g.len(),
        span: g.span(),
        initial_tasks: initial,
        final_tasks: finals,
        source_sends_per_initial: out.metrics.source_sends as f64 / initial.max(1) as f64,
        target_receives_per_final: out.metrics.target_receives as f64 / finals.max(1) as f64,
        honest_holders: out.honest_holders,
        holders: out.holders,
        metrics: out.metrics,
    };
    Ok((
        record,
        TrialTrace {
            seed,
            rounds: out.trace,
        },
    ))
}

/// Runs one trial.
pub fn run_trial(cfg: &ExperimentConfig, seed: u64) -> Result<(TrialRecord, TrialTrace)> {
    match cfg.app {
        AppKind::Path => run_app(&ComputeApp::new(build_path(cfg.n)?, seed), cfg, seed),
        AppKind::Dag => run_app(&ComputeApp::new(dag_graph(cfg, seed)?, seed), cfg, seed),
        AppKind::Matmul => run_app(&matmul_app(cfg, seed)?, cfg, seed),
        AppKind::Mergesort => run_app(&mergesort_app(cfg, seed)?, cfg, seed),
    }
}

/// Runs one trial per seed, concurrently, and checks the ceilings.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Batch> {
    let warnings = cfg.validate()?;
    let results: Vec<(TrialRecord, TrialTrace)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_trial(cfg, seed))
        .collect::<Result<_>>()?;
    let (trials, traces): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let summary = summarize(&trials, warnings);
    let verdicts = check_ceilings(&cfg.ceilings, &trials);
    Ok(Batch {
        config: cfg.clone(),
        pass: verdicts.iter().all(|v| v.pass),
        trials,
        summary,
        verdicts,
        traces: if cfg.trace { traces } else { Vec::new() },
    })
}

/// Quantities summarized in [`Summary::stats`].
pub fn stat_fields(t: &TrialRecord) -> [(&'static str, f64); 10] {
    let m = &t.metrics;
    [
        ("rounds", t.rounds as f64),
        ("source_sends_per_initial", t.source_sends_per_initial),
        ("target_receives_per_final", t.target_receives_per_final),
        ("comp_work", m.comp_work.total() as f64),
        ("comm_work", m.comm_work.total() as f64),
        ("mul_adds", m.mul_adds as f64),
        ("verify_work", m.verify_work as f64),
        ("supervisor_msgs", m.supervisor_msgs as f64),
        ("per_task_max_items", m.per_task_max_items as f64),
        ("executions", m.executions as f64),
    ]
}

fn summarize(trials: &[TrialRecord], warnings: Vec<String>) -> Summary {
    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for t in trials {
        for (name, x) in stat_fields(t) {
            columns.entry(name.to_string()).or_default().push(x);
        }
    }
    let terminated = trials.iter().filter(|t| t.terminated).count();
    Summary {
        trials: trials.len(),
        terminated,
        hit_cap: trials.len() - terminated,
        correct: trials.iter().filter(|t| t.correct == Some(true)).count(),
        incorrect: trials.iter().filter(|t| t.correct == Some(false)).count(),
        honest_majority: trials.iter().filter(|t| t.honest_majority()).count(),
        stats: columns
            .into_iter()
            .filter_map(|(k, v)| Stats::of(&v).map(|s| (k, s)))
            .collect(),
        warnings,
    }
}

fn mean(trials: &[TrialRecord], f: impl Fn(&TrialRecord) -> f64) -> f64 {
    if trials.is_empty() {
        return 0.0;
    }
    trials.iter().map(f).sum::<f64>() / trials.len() as f64
}

fn fraction(trials: &[TrialRecord], f: impl Fn(&TrialRecord) -> bool) -> f64 {
    if trials.is_empty() {
        return 1.0;
    }
    trials.iter().filter(|t| f(t)).count() as f64 / trials.len() as f64
}

fn verdict(name: &str, observed: f64, limit: f64, pass: bool) -> Verdict {
    Verdict {
        name: name.to_string(),
        observed,
        limit,
        pass,
    }
}

type MeanOf = fn(&TrialRecord) -> f64;

/// Checks every configured ceiling against the trials.
pub fn check_ceilings(c: &Ceilings, trials: &[TrialRecord]) -> Vec<Verdict> {
    let mut out = Vec::new();
    let max_of = |f: &dyn Fn(&TrialRecord) -> u64| trials.iter().map(f).max().unwrap_or(0);
    if let Some(limit) = c.max_rounds {
        let worst = trials
            .iter()
            .map(|t| if t.terminated { t.rounds } else { u64::MAX })
            .max()
            .unwrap_or(0);
        out.push(verdict("max_rounds", worst as f64, limit as f64, worst <= limit));
    }
    if let Some(w) = c.rounds_within {
        let f = fraction(trials, |t| t.terminated && t.rounds <= w.bound);
        out.push(verdict(
            &format!("fraction_within_{}_rounds", w.bound),
            f,
            w.min_fraction,
            f >= w.min_fraction,
        ));
    }
    let means: [(&str, Option<f64>, MeanOf); 4] = [
        ("mean_source_sends", c.mean_source_sends, |t| t.source_sends_per_initial),
        ("mean_target_receives", c.mean_target_receives, |t| {
            t.target_receives_per_final
        }),
        ("mean_comp_work", c.mean_comp_work, |t| {
            t.metrics.comp_work.total() as f64
        }),
        ("mean_comm_work", c.mean_comm_work, |t| {
            t.metrics.comm_work.total() as f64
        }),
    ];
    for (name, limit, f) in means {
        if let Some(limit) = limit {
            let m = mean(trials, f);
            out.push(verdict(name, m, limit, m <= limit));
        }
    }
    if let Some(limit) = c.max_mul_adds {
        let m = max_of(&|t| t.metrics.mul_adds);
        out.push(verdict("max_mul_adds", m as f64, limit as f64, m <= limit));
    }
    if let Some(limit) = c.max_per_task_items {
        let m = max_of(&|t| t.metrics.per_task_max_items);
        out.push(verdict("max_per_task_items", m as f64, limit as f64, m <= limit));
    }
    if let Some(limit) = c.min_honest_majority_fraction {
        let f = fraction(trials, TrialRecord::honest_majority);
        out.push(verdict("honest_majority_fraction", f, limit, f >= limit));
    }
    if c.require_correct {
        let bad = trials.iter().filter(|t| t.correct == Some(false)).count();
        out.push(verdict("incorrect_outputs", bad as f64, 0.0, bad == 0));
    }
    if c.require_terminated {
        let open = trials.iter().filter(|t| !t.terminated).count();
        out.push(verdict("unterminated_trials", open as f64, 0.0, open == 0));
    }
    out
}
