use serde::{Deserialize, Serialize};

use crate::adversary::{AdversaryReport, AdversaryView, Assignment, Destination, Emission, Strategy, WorkerPool};
use crate::error::{Error, Result};
use crate::metrics::{Metrics, Work};
use crate::protocol::app::{Application, Execution, WorkCtx};
use crate::protocol::state::{rejection_is_wellformed, Aux, Report, SupervisorState};
use crate::rng::{stream, SimRng, Stream};
use crate::taskgraph::{ceil_c_log2, TaskGraph, TaskId};

/// How REJECTs and target refusals are turned into rollbacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Single path: any REJECT from `v_i` (or the target, `i = n + 1`)
    /// re-opens `v_{i-1}`.
    Path,
    /// General DAG: REJECT(R) prunes `R` and its finished descendants; a
    /// refused final output is treated like a missing reply.
    Dag,
}

/// Behavior of the target towards delivered outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetPolicy {
    #[default]
    Verify,
    /// Refuses everything (adversarial environment).
    AlwaysReject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub beta: f64,
    pub mode: Mode,
    pub target: TargetPolicy,
    pub seed: u64,
    /// Re-check ancestor closure after every round.
    pub check_invariants: bool,
    /// Record a per-round trace.
    pub trace: bool,
}

impl EngineConfig {
    pub fn new(beta: f64, mode: Mode, seed: u64) -> Self {
        Self {
            beta,
            mode,
            target: TargetPolicy::Verify,
            seed,
            check_invariants: false,
            trace: false,
        }
    }
}

/// Default round cap: `64·(D + ⌈log₂ n⌉ + 1)`.
pub fn default_round_cap(g: &TaskGraph) -> u64 {
    64 * (g.span() as u64 + ceil_c_log2(1, g.len()) as u64 + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Done,
    Reject,
    Silent,
}

impl From<&Report> for ReportKind {
    fn from(r: &Report) -> Self {
        match r {
            Report::Done(_) => ReportKind::Done,
            Report::Reject(_) => ReportKind::Reject,
            Report::Silent => ReportKind::Silent,
        }
    }
}

/// One line of the per-round trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: u64,
    pub scheduled: Vec<TaskId>,
    pub reports: Vec<ReportKind>,
    pub finished: usize,
}

/// Result of [`Engine::run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome<O> {
    pub rounds_used: u64,
    pub terminated: bool,
    pub metrics: Metrics,
    pub target_output: Option<O>,
    /// Whether the assembled output equals the oracle; `None` unless terminated.
    pub correct: Option<bool>,
    /// Honest workers among those currently holding finished tasks.
    pub honest_holders: usize,
    pub holders: usize,
    pub trace: Vec<RoundTrace>,
}

/// Outputs an all-honest execution produces, used for faithful adversarial
/// emissions and declarations.
#[derive(Debug, Clone)]
pub struct Reference<P> {
    pub outputs: Vec<Vec<P>>,
    pub aux: Vec<Aux>,
}

/// Executes every task once, honestly, in level order.
pub fn reference_run<A: Application>(app: &A, seed: u64) -> Result<Reference<A::Payload>> {
    let g = app.graph();
    let mut sup = SupervisorState::new(g);
    let mut rng = stream(seed, Stream::Reference);
    let mut work = Work::default();
    let mut outputs: Vec<Vec<A::Payload>> = vec![Vec::new(); g.len()];
    let mut aux = vec![Aux::None; g.len()];
    for v in g.topological_order() {
        let inputs: Vec<Option<A::Payload>> = if g.is_initial(v) {
            vec![Some(app.source_input(v))]
        } else {
            g.preds(v)
                .iter()
                .map(|&u| {
                    let slot = g.succ_slot(u, v).expect("edge present");
                    Some(outputs[u.index()][slot].clone())
                })
                .collect()
        };
        let mut ctx = WorkCtx {
            rng: &mut rng,
            work: &mut work,
        };
        match app.execute(v, &inputs, &sup, &mut ctx) {
            Execution::Done { aux: a, outputs: out } => {
                check_output_arity(g, v, out.len())?;
                sup.mark_done(g, v, None, a.clone())?;
                outputs[v.index()] = out;
                aux[v.index()] = a;
            }
            Execution::Reject(r) => {
                return Err(Error::Invariant(format!(
                    "honest execution of {v} rejected faithful inputs {r:?}"
                )))
            }
        }
    }
    Ok(Reference { outputs, aux })
}

fn check_output_arity(g: &TaskGraph, v: TaskId, got: usize) -> Result<()> {
    let want = g.succs(v).len().max(1);
    if got != want {
        return Err(Error::Invariant(format!("{v} produced {got} outputs, expected {want}")));
    }
    Ok(())
}

/// Worker-side state of the worker holding a finished task.
#[derive(Debug, Clone)]
struct Held<P> {
    assignment: Assignment,
    /// Committed outputs; adversarial holders derive theirs on demand.
    outputs: Option<Vec<P>>,
}

struct Outcome<P> {
    assignment: Assignment,
    report: Report,
    outputs: Option<Vec<P>>,
}

/// The round-based simulation of one run.
pub struct Engine<'a, A: Application> {
    app: &'a A,
    cfg: EngineConfig,
    sup: SupervisorState,
    pool: WorkerPool,
    strategy: Box<dyn Strategy>,
    sampling_rng: SimRng,
    worker_rng: SimRng,
    adversary_rng: SimRng,
    reference: Option<Reference<A::Payload>>,
    held: Vec<Option<Held<A::Payload>>>,
    holders: Vec<Option<Assignment>>,
    accepted: Vec<Option<A::Payload>>,
    scheduled: Vec<Assignment>,
    source_sends: Vec<u64>,
    metrics: Metrics,
    trace: Vec<RoundTrace>,
    output: Option<A::Output>,
}

impl<'a, A: Application> Engine<'a, A> {
    pub fn new(app: &'a A, strategy: Box<dyn Strategy>, cfg: EngineConfig) -> Result<Self> {
        let g = app.graph();
        if g.is_empty() {
            return Err(Error::InvalidSize("empty task graph".into()));
        }
        if cfg.mode == Mode::Path && !g.is_path() {
            return Err(Error::Config("path mode requires a path task graph".into()));
        }
        let n = g.len();
        Ok(Self {
            app,
            pool: WorkerPool::new(cfg.beta)?,
            sup: SupervisorState::new(g),
            strategy,
            sampling_rng: stream(cfg.seed, Stream::Sampling),
            worker_rng: stream(cfg.seed, Stream::Workers),
            adversary_rng: stream(cfg.seed, Stream::Adversary),
            reference: None,
            held: vec![None; n],
            holders: vec![None; n],
            accepted: vec![None; n],
            scheduled: Vec::new(),
            source_sends: vec![0; n],
            metrics: Metrics::default(),
            trace: Vec::new(),
            output: None,
            cfg,
        })
    }

    pub fn supervisor(&self) -> &SupervisorState {
        &self.sup
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    /// True once every task is finished and the target assembled its output.
    pub fn terminated(&self) -> bool {
        self.output.is_some()
    }

    fn ensure_reference(&mut self) -> Result<()> {
        if self.reference.is_none() {
            self.reference = Some(reference_run(self.app, self.cfg.seed)?);
        }
        Ok(())
    }

    /// Payload the holder of finished `u` sends to `dest`, if any.
    fn emission(&mut self, u: TaskId, dest: Destination) -> Result<Option<A::Payload>> {
        let app = self.app;
        let g = app.graph();
        let slot = match dest {
            Destination::Task(w) => g.succ_slot(u, w).expect("edge present"),
            Destination::Target => 0,
        };
        let held = self.held[u.index()]
            .as_ref()
            .ok_or_else(|| Error::Invariant(format!("{u} is finished but has no holder")))?;
        let payload = if held.assignment.tag.honest {
            let outputs = held.outputs.as_ref().expect("honest holders keep outputs");
            Some(outputs[slot].clone())
        } else {
            self.ensure_reference()?;
            let view = AdversaryView {
                round: self.sup.round(),
                graph: g,
                supervisor: &self.sup,
                scheduled: &self.scheduled,
                holders: &self.holders,
            };
            let faithful = &self.reference.as_ref().expect("reference computed").outputs[u.index()];
            match self.strategy.emit(&view, u, dest, &mut self.adversary_rng) {
                Emission::Faithful => Some(faithful[slot].clone()),
                Emission::Withhold => None,
                Emission::Corrupt(kind) => self.app.corrupt(u, slot, dest, faithful, kind, &mut self.adversary_rng),
            }
        };
        if let Some(p) = &payload {
            self.metrics.comm_work.workers += self.app.payload_units(p);
        }
        Ok(payload)
    }

    fn gather_inputs(&mut self, v: TaskId) -> Result<Vec<Option<A::Payload>>> {
        let app = self.app;
        let g = app.graph();
        if g.is_initial(v) {
            let p = self.app.source_input(v);
            self.metrics.comm_work.source += self.app.payload_units(&p);
            self.metrics.source_sends += 1;
            let sends = &mut self.source_sends[v.index()];
            *sends += 1;
            self.metrics.max_source_sends_per_initial = self.metrics.max_source_sends_per_initial.max(*sends);
            return Ok(vec![Some(p)]);
        }
        g.preds(v)
            .iter()
            .map(|&u| self.emission(u, Destination::Task(v)))
            .collect()
    }

    fn execute(&mut self, a: Assignment) -> Result<Outcome<A::Payload>> {
        let app = self.app;
        let g = app.graph();
        let v = a.task;
        let inputs = self.gather_inputs(v)?;
        self.metrics.executions += 1;
        if a.tag.honest {
            let items: u64 = inputs.iter().flatten().map(|p| self.app.payload_units(p)).sum();
            self.metrics.per_task_max_items = self.metrics.per_task_max_items.max(items);
            let mut work = Work::default();
            let mut ctx = WorkCtx {
                rng: &mut self.worker_rng,
                work: &mut work,
            };
            let exec = self.app.execute(v, &inputs, &self.sup, &mut ctx);
            self.metrics.comp_work.workers += work.computational();
            self.metrics.mul_adds += work.mul_adds;
            self.metrics.verify_work += work.verify;
            return Ok(match exec {
                Execution::Done { aux, outputs } => {
                    check_output_arity(g, v, outputs.len())?;
                    Outcome {
                        assignment: a,
                        report: Report::Done(aux),
                        outputs: Some(outputs),
                    }
                }
                Execution::Reject(r) => Outcome {
                    assignment: a,
                    report: Report::Reject(r),
                    outputs: None,
                },
            });
        }
        self.metrics.adversarial_executions += 1;
        let view = AdversaryView {
            round: self.sup.round(),
            graph: g,
            supervisor: &self.sup,
            scheduled: &self.scheduled,
            holders: &self.holders,
        };
        let report = match self.strategy.report(&view, v, &mut self.adversary_rng) {
            AdversaryReport::Silent => Report::Silent,
            AdversaryReport::Reject(r) => Report::Reject(r),
            AdversaryReport::Done(tamper) => {
                self.ensure_reference()?;
                let honest = &self.reference.as_ref().expect("reference computed").aux[v.index()];
                let aux = match tamper {
                    None => honest.clone(),
                    Some(kind) => self.app.tamper_aux(v, honest, kind, &mut self.adversary_rng),
                };
                Report::Done(aux)
            }
        };
        Ok(Outcome {
            assignment: a,
            report,
            outputs: None,
        })
    }

    fn release(&mut self, removed: &[TaskId]) {
        for &x in removed {
            self.held[x.index()] = None;
            self.holders[x.index()] = None;
            self.accepted[x.index()] = None;
        }
        self.metrics.comp_work.supervisor += removed.len() as u64;
    }

    /// The target refused (or never received) the output of final task `v`.
    fn refuse_final(&mut self, v: TaskId) -> Result<()> {
        let app = self.app;
        let g = app.graph();
        let removed = match self.cfg.mode {
            Mode::Path => self.sup.path_mode_rollback(g, g.len() + 1)?.1,
            Mode::Dag => self.sup.prune(g, &[v]),
        };
        self.release(&removed);
        Ok(())
    }

    /// Delivers final task `v`'s output to the target; true if accepted.
    fn deliver(&mut self, v: TaskId) -> Result<bool> {
        let Some(p) = self.emission(v, Destination::Target)? else {
            return Ok(false);
        };
        self.metrics.target_receives += 1;
        self.metrics.supervisor_msgs += 1;
        self.metrics.comm_work.supervisor += 1;
        if self.cfg.target == TargetPolicy::AlwaysReject {
            return Ok(false);
        }
        let mut work = Work::default();
        let ok = self.app.target_accepts(v, &p, &self.sup, &mut work);
        self.metrics.comp_work.target += work.computational();
        self.metrics.verify_work += work.verify;
        if ok {
            self.accepted[v.index()] = Some(p);
        }
        Ok(ok)
    }

    /// Runs one synchronous round.
    pub fn step_round(&mut self) -> Result<RoundTrace> {
        let app = self.app;
        let g = app.graph();
        let wave: Vec<TaskId> = self.sup.wavefront().collect();
        if self.cfg.mode == Mode::Path && wave.len() != 1 {
            return Err(Error::Invariant(format!(
                "path mode scheduled {} tasks in one round",
                wave.len()
            )));
        }
        self.scheduled.clear();
        for &v in &wave {
            let (worker, tag) = self.pool.sample_worker(&mut self.sampling_rng);
            self.scheduled.push(Assignment { task: v, worker, tag });
            let msgs = 1 + g.preds(v).len().max(1) as u64 + app.hint_units(v);
            self.metrics.supervisor_msgs += msgs;
            self.metrics.comm_work.supervisor += msgs;
        }
        let mut outcomes = Vec::with_capacity(wave.len());
        for i in 0..self.scheduled.len() {
            let a = self.scheduled[i];
            outcomes.push(self.execute(a)?);
        }
        let reports: Vec<ReportKind> = outcomes.iter().map(|o| ReportKind::from(&o.report)).collect();

        let mut rejected = Vec::new();
        for o in outcomes {
            let v = o.assignment.task;
            match o.report {
                Report::Silent => {}
                Report::Done(aux) => {
                    self.metrics.supervisor_msgs += 1;
                    self.metrics.comm_work.supervisor += 1;
                    self.metrics.comp_work.supervisor += 1;
                    if !app.check_done(v, &aux, &self.sup) {
                        continue;
                    }
                    self.sup.mark_done(g, v, Some(o.assignment.worker), aux)?;
                    self.held[v.index()] = Some(Held {
                        assignment: o.assignment,
                        outputs: o.outputs,
                    });
                    self.holders[v.index()] = Some(o.assignment);
                    if g.is_final(v) && !self.deliver(v)? {
                        self.refuse_final(v)?;
                    }
                }
                Report::Reject(r) => {
                    self.metrics.supervisor_msgs += 1;
                    self.metrics.comm_work.supervisor += 1;
                    self.metrics.comp_work.supervisor += 1;
                    rejected.push((v, r));
                }
            }
        }
        let mut roots = Vec::new();
        for (v, r) in rejected {
            match self.cfg.mode {
                Mode::Path => {
                    let removed = self.sup.path_mode_rollback(g, v.index() + 1)?.1;
                    self.release(&removed);
                }
                Mode::Dag => {
                    if rejection_is_wellformed(g, v, &r) {
                        roots.extend(r);
                    }
                }
            }
        }
        if !roots.is_empty() {
            roots.sort_unstable();
            roots.dedup();
            let removed = self.sup.prune(g, &roots);
            self.release(&removed);
        }

        self.sup.advance_round();
        self.metrics.rounds = self.sup.round();
        if self.cfg.check_invariants && !self.sup.check_closure(g) {
            return Err(Error::Invariant(format!(
                "finished set lost ancestor closure in round {}",
                self.sup.round()
            )));
        }
        if self.sup.all_finished() {
            self.try_assemble()?;
        }
        let line = RoundTrace {
            round: self.sup.round(),
            scheduled: wave,
            reports,
            finished: self.sup.finished_count(),
        };
        if self.cfg.trace {
            self.trace.push(line.clone());
        }
        Ok(line)
    }

    fn try_assemble(&mut self) -> Result<()> {
        let app = self.app;
        let g = app.graph();
        let streams: Vec<&A::Payload> = g
            .final_tasks()
            .iter()
            .map(|f| {
                self.accepted[f.index()]
                    .as_ref()
                    .ok_or_else(|| Error::Invariant(format!("final {f} finished without an accepted output")))
            })
            .collect::<Result<_>>()?;
        let mut work = Work::default();
        let result = self.app.assemble(&streams, &mut work);
        self.metrics.comp_work.target += work.computational();
        self.metrics.verify_work += work.verify;
        match result {
            Ok(out) => self.output = Some(out),
            Err(offenders) => {
                for f in offenders {
                    if self.sup.is_finished(f) {
                        self.refuse_final(f)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Steps until termination or until `round_cap` rounds have run.
    pub fn run(mut self, round_cap: u64) -> Result<RunOutcome<A::Output>> {
        if round_cap == 0 {
            return Err(Error::Config("round cap must be at least 1".into()));
        }
        while !self.terminated() && self.sup.round() < round_cap {
            self.step_round()?;
        }
        let terminated = self.terminated();
        let correct = self.output.as_ref().map(|o| *o == self.app.oracle());
        let held: Vec<&Assignment> = self.holders.iter().flatten().collect();
        Ok(RunOutcome {
            rounds_used: self.sup.round(),
            terminated,
            honest_holders: held.iter().filter(|a| a.tag.honest).count(),
            holders: held.len(),
            metrics: self.metrics,
            target_output: self.output,
            correct,
            trace: self.trace,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{make_strategy, StrategySpec};
    use crate::compute::ComputeApp;
    use crate::taskgraph::{build_path, DagBuilder, TaskKind};

    fn run(app: &ComputeApp, beta: f64, mode: Mode, strategy: &str, seed: u64, cap: u64) -> RunOutcome<Vec<u64>> {
        let mut cfg = EngineConfig::new(beta, mode, seed);
        cfg.check_invariants = true;
        cfg.trace = true;
        let s = make_strategy(&StrategySpec::named(strategy)).unwrap();
        Engine::new(app, s, cfg).unwrap().run(cap).unwrap()
    }

    #[test]
    fn honest_path_takes_one_round_per_task() {
        let app = ComputeApp::new(build_path(3).unwrap(), 0);
        let out = run(&app, 0.0, Mode::Path, "silent", 1, 100);
        assert!(out.terminated);
        assert_eq!(out.rounds_used, 3);
        assert_eq!(out.correct, Some(true));
        assert_eq!(out.metrics.source_sends, 1);
        assert_eq!(out.metrics.target_receives, 1);
        assert_eq!(out.trace.len(), 3);
        assert!(out.trace.iter().all(|t| t.scheduled.len() == 1));
    }

    #[test]
    fn saturated_silence_hits_the_cap() {
        let app = ComputeApp::new(build_path(3).unwrap(), 0);
        let out = run(&app, 1.0, Mode::Path, "silent", 1, 50);
        assert!(!out.terminated);
        assert_eq!(out.rounds_used, 50);
        assert_eq!(out.correct, None);
        assert_eq!(out.metrics.source_sends, 50);
    }

    #[test]
    fn honest_dag_takes_depth_plus_one_rounds() {
        let mut b = DagBuilder::new();
        for _ in 0..4 {
            b.add_task(TaskKind::Generic);
        }
        for (u, v) in [(0, 1), (0, 2), (1, 3), (2, 3)] {
            b.add_edge(TaskId(u), TaskId(v));
        }
        let app = ComputeApp::new(b.build().unwrap(), 3);
        let out = run(&app, 0.0, Mode::Dag, "silent", 1, 100);
        assert_eq!((out.terminated, out.rounds_used), (true, 3));
    }

    #[test]
    fn path_mode_requires_a_path() {
        let mut b = DagBuilder::new();
        let a = b.add_task(TaskKind::Generic);
        let c = b.add_task(TaskKind::Generic);
        let d = b.add_task(TaskKind::Generic);
        b.add_edge(a, c);
        b.add_edge(a, d);
        let app = ComputeApp::new(b.build().unwrap(), 0);
        let s = make_strategy(&StrategySpec::named("silent")).unwrap();
        assert!(Engine::new(&app, s, EngineConfig::new(0.0, Mode::Path, 0)).is_err());
    }

    #[test]
    fn refused_final_output_is_retried() {
        for mode in [Mode::Path, Mode::Dag] {
            let app = ComputeApp::new(build_path(4).unwrap(), 0);
            let mut cfg = EngineConfig::new(0.0, mode, 0);
            cfg.target = TargetPolicy::AlwaysReject;
            let s = make_strategy(&StrategySpec::named("silent")).unwrap();
            let mut e = Engine::new(&app, s, cfg).unwrap();
            for _ in 0..4 {
                e.step_round().unwrap();
            }
            // the last task was executed, delivered and refused
            assert_eq!(e.supervisor().finished_count(), 3);
            assert!(e.supervisor().in_wavefront(TaskId(3)));
            for _ in 0..10 {
                e.step_round().unwrap();
            }
            assert_eq!(e.metrics().source_sends, 1);
            assert_eq!(e.metrics().target_receives, 11);
            assert!(!e.terminated());
        }
    }

    #[test]
    fn adversaries_never_break_safety_on_paths() {
        let app = ComputeApp::new(build_path(40).unwrap(), 9);
        for s in [
            "always-reject",
            "silent",
            "corrupt-output",
            "honest-until-end",
            "random-mix",
            "forge-everything",
        ] {
            for seed in 0..10 {
                let out = run(&app, 0.3, Mode::Path, s, seed, 10_000);
                assert!(out.terminated, "{s} seed {seed}");
                assert_eq!(out.correct, Some(true), "{s} seed {seed}");
            }
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let app = ComputeApp::new(build_path(50).unwrap(), 2);
        let a = run(&app, 0.2, Mode::Path, "random-mix", 17, 10_000);
        let b = run(&app, 0.2, Mode::Path, "random-mix", 17, 10_000);
        assert_eq!(a, b);
    }
}
