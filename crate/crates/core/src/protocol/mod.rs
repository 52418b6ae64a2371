//! The supervisor's data-agnostic scheduling protocol and the round engine.

mod app;
mod engine;
mod state;

pub use app::{Application, Execution, WorkCtx};
pub use engine::{
    default_round_cap, reference_run, Engine, EngineConfig, Mode, Reference, ReportKind, RoundTrace, RunOutcome,
    TargetPolicy,
};
pub use state::{rejection_is_wellformed, wavefront, Aux, Report, ReportEffect, SupervisorState};
