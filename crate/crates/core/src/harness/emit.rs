use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::run::{Batch, TrialRecord, TrialTrace};

/// Output format of [`emit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// CSV columns, in order.
pub const CSV_HEADER: [&str; 20] = [
    "record",
    "seed",
    "terminated",
    "correct",
    "rounds",
    "round_cap",
    "tasks",
    "source_sends",
    "source_sends_per_initial",
    "target_receives",
    "target_receives_per_final",
    "comp_work",
    "comm_work",
    "mul_adds",
    "verify_work",
    "supervisor_msgs",
    "per_task_max_items",
    "executions",
    "adversarial_executions",
    "honest_majority",
];

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn trial_row(t: &TrialRecord) -> Vec<String> {
    let m = &t.metrics;
    let correct = match t.correct {
        Some(c) => c.to_string(),
        None => String::new(),
    };
    vec![
        "trial".into(),
        t.seed.to_string(),
        t.terminated.to_string(),
        correct,
        t.rounds.to_string(),
        t.round_cap.to_string(),
        t.tasks.to_string(),
        m.source_sends.to_string(),
        t.source_sends_per_initial.to_string(),
        m.target_receives.to_string(),
        t.target_receives_per_final.to_string(),
        m.comp_work.total().to_string(),
        m.comm_work.total().to_string(),
        m.mul_adds.to_string(),
        m.verify_work.to_string(),
        m.supervisor_msgs.to_string(),
        m.per_task_max_items.to_string(),
        m.executions.to_string(),
        m.adversarial_executions.to_string(),
        t.honest_majority().to_string(),
    ]
}

/// The summary row: counts for the boolean columns, means elsewhere.
fn summary_row(b: &Batch) -> Vec<String> {
    let n = b.trials.len();
    let mean = |f: &dyn Fn(&TrialRecord) -> f64| {
        if n == 0 {
            String::new()
        } else {
            (b.trials.iter().map(f).sum::<f64>() / n as f64).to_string()
        }
    };
    let s = &b.summary;
    let round_cap = b
        .trials
        .iter()
        .map(|t| t.round_cap)
        .max()
        .map(|c| c.to_string())
        .unwrap_or_default();
    vec![
        "summary".into(),
        String::new(),
        s.terminated.to_string(),
        s.correct.to_string(),
        mean(&|t| t.rounds as f64),
        round_cap,
        mean(&|t| t.tasks as f64),
        mean(&|t| t.metrics.source_sends as f64),
        mean(&|t| t.source_sends_per_initial),
        mean(&|t| t.metrics.target_receives as f64),
        mean(&|t| t.target_receives_per_final),
        mean(&|t| t.metrics.comp_work.total() as f64),
        mean(&|t| t.metrics.comm_work.total() as f64),
        mean(&|t| t.metrics.mul_adds as f64),
        mean(&|t| t.metrics.verify_work as f64),
        mean(&|t| t.metrics.supervisor_msgs as f64),
        mean(&|t| t.metrics.per_task_max_items as f64),
        mean(&|t| t.metrics.executions as f64),
        mean(&|t| t.metrics.adversarial_executions as f64),
        s.honest_majority.to_string(),
    ]
}

/// Serializes a batch. JSON holds the whole [`Batch`]; CSV holds one row per
/// trial plus a summary row.
pub fn emit(batch: &Batch, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(batch).map_err(|e| Error::Io(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER).map_err(csv_err)?;
            for t in &batch.trials {
                w.write_record(trial_row(t)).map_err(csv_err)?;
            }
            w.write_record(summary_row(batch)).map_err(csv_err)?;
            w.into_inner().map_err(|e| Error::Io(e.to_string()))
        }
    }
}

/// Parses JSON produced by [`emit`].
pub fn parse_json(bytes: &[u8]) -> Result<Batch> {
    serde_json::from_slice(bytes).map_err(|e| Error::Config(format!("batch: {e}")))
}

/// Writes traces as JSON lines, one object per round:
/// `{"seed":..,"round":..,"scheduled":[..],"reports":[..],"finished":..}`.
pub fn write_trace<W: Write>(traces: &[TrialTrace], mut out: W) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        seed: u64,
        #[serde(flatten)]
        round: &'a crate::protocol::RoundTrace,
    }
    for t in traces {
        for r in &t.rounds {
            serde_json::to_writer(&mut out, &Line { seed: t.seed, round: r }).map_err(|e| Error::Io(e.to_string()))?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}
