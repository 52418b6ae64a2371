//! `supervise`: runs experiment batches and writes JSON or CSV results.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};
use supervised::adversary::{builtin_strategies, StrategySpec};
use supervised::harness::{
    build_graph, emit, run_experiment, write_trace, AppKind, DagShape, ExperimentConfig, Format,
};
use supervised::protocol::TargetPolicy;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AppArg {
    Path,
    Dag,
    Matmul,
    Mergesort,
}

impl From<AppArg> for AppKind {
    fn from(a: AppArg) -> Self {
        match a {
            AppArg::Path => AppKind::Path,
            AppArg::Dag => AppKind::Dag,
            AppArg::Matmul => AppKind::Matmul,
            AppArg::Mergesort => AppKind::Mergesort,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

/// Runs supervised-computation trials, one per seed.
#[derive(Debug, Parser)]
#[command(name = "supervise", version)]
struct Args {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    app: Option<AppArg>,
    #[arg(long)]
    beta: Option<f64>,
    /// Path length, sorting blocks, or k² for matmul.
    #[arg(long)]
    n: Option<usize>,
    /// Matrix dimension or number of values.
    #[arg(long)]
    m: Option<usize>,
    /// Freivalds repetitions.
    #[arg(long)]
    tau: Option<u32>,
    /// List-length constant.
    #[arg(long)]
    c: Option<u32>,
    /// Strategy name, optionally with parameters: `name:key=value,...`.
    #[arg(long)]
    strategy: Option<String>,
    /// Seeds: comma-separated values and `a..b` ranges.
    #[arg(long)]
    seeds: Option<String>,
    /// Shorthand for seeds `0..trials`.
    #[arg(long, conflicts_with = "seeds")]
    trials: Option<u64>,
    #[arg(long)]
    round_cap: Option<u64>,
    /// The target refuses every delivery.
    #[arg(long)]
    target_rejects: bool,
    /// Re-check ancestor closure after every round.
    #[arg(long)]
    check_invariants: bool,
    #[arg(long)]
    dag_depth: Option<usize>,
    #[arg(long)]
    dag_width: Option<usize>,
    #[arg(long)]
    dag_degree: Option<usize>,
    /// Dense binary matrix A.
    #[arg(long, requires = "matrix_b")]
    matrix_a: Option<PathBuf>,
    #[arg(long, requires = "matrix_a")]
    matrix_b: Option<PathBuf>,
    /// Whitespace-separated values to sort.
    #[arg(long)]
    values: Option<PathBuf>,
    /// Results file; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Writes a JSON-lines round trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Writes the first seed's task graph here as JSON.
    #[arg(long)]
    dump_graph: Option<PathBuf>,
    /// Lists the built-in strategies and exits.
    #[arg(long)]
    list_strategies: bool,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.parse()?, b.parse()?);
                out.extend(a..b);
            }
            None => out.push(part.parse().with_context(|| format!("seed '{part}'"))?),
        }
    }
    Ok(out)
}

fn parse_strategy(s: &str) -> Result<StrategySpec> {
    let (name, params) = s.split_once(':').unwrap_or((s, ""));
    let mut spec = StrategySpec::named(name);
    for kv in params.split(',').filter(|p| !p.is_empty()) {
        let Some((k, v)) = kv.split_once('=') else {
            bail!("strategy parameter '{kv}' is not key=value");
        };
        spec.params.insert(k.to_string(), v.parse()?);
    }
    Ok(spec)
}

fn config(args: &Args) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(a) = args.app {
        cfg.app = a.into();
    }
    macro_rules! set {
        ($($field:ident),*) => {$(if let Some(v) = args.$field { cfg.$field = v; })*};
    }
    set!(beta, n, m, tau, c);
    if let Some(s) = &args.strategy {
        cfg.strategy = parse_strategy(s)?;
    }
    if let Some(s) = &args.seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    if let Some(t) = args.trials {
        cfg.seeds = (0..t).collect();
    }
    if args.round_cap.is_some() {
        cfg.round_cap = args.round_cap;
    }
    if args.target_rejects {
        cfg.target = TargetPolicy::AlwaysReject;
    }
    cfg.check_invariants |= args.check_invariants;
    cfg.trace |= args.trace.is_some();
    if args.dag_depth.is_some() || args.dag_width.is_some() || args.dag_degree.is_some() {
        let base = cfg.dag.unwrap_or(DagShape {
            depth: 64,
            width: 8,
            degree: 2,
        });
        cfg.dag = Some(DagShape {
            depth: args.dag_depth.unwrap_or(base.depth),
            width: args.dag_width.unwrap_or(base.width),
            degree: args.dag_degree.unwrap_or(base.degree),
        });
    }
    if args.matrix_a.is_some() {
        cfg.inputs.a = args.matrix_a.clone();
        cfg.inputs.b = args.matrix_b.clone();
    }
    if args.values.is_some() {
        cfg.inputs.values = args.values.clone();
    }
    Ok(cfg)
}

fn run(args: &Args) -> Result<bool> {
    if args.list_strategies {
        for s in builtin_strategies() {
            println!("{:<18} {:?}  {}", s.name, s.applies_to, s.summary);
        }
        return Ok(true);
    }
    let cfg = config(args)?;
    if let Some(path) = &args.dump_graph {
        let seed = cfg.seeds.first().copied().unwrap_or(0);
        let dump = serde_json::to_vec_pretty(&build_graph(&cfg, seed)?.dump())?;
        fs::write(path, dump).with_context(|| format!("writing {}", path.display()))?;
    }
    let batch = run_experiment(&cfg)?;
    for w in &batch.summary.warnings {
        eprintln!("warning: {w}");
    }
    let format = match args.format {
        FormatArg::Json => Format::Json,
        FormatArg::Csv => Format::Csv,
    };
    let bytes = emit(&batch, format)?;
    match &args.out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?,
        None => io::stdout().write_all(&bytes)?,
    }
    if let Some(p) = &args.trace {
        let f = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
        write_trace(&batch.traces, io::BufWriter::new(f))?;
    }
    for v in batch.verdicts.iter().filter(|v| !v.pass) {
        eprintln!("verdict failed: {} = {} (limit {})", v.name, v.observed, v.limit);
    }
    Ok(batch.pass)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
