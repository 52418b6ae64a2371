//! Experiment runner: configuration, trial batches, aggregation and output.

mod config;
mod emit;
mod run;

pub use config::{AppKind, Ceilings, DagShape, ExperimentConfig, InputFiles, RoundsWithin};
pub use emit::{emit, parse_json, write_trace, Format, CSV_HEADER};
pub use run::{
    build_graph, check_ceilings, parse_values, run_experiment, run_trial, stat_fields, Batch, Stats, Summary,
    TrialRecord, TrialTrace, Verdict,
};
