//! Worker sampling and the adversary's decision interface.
//!
//! Every sample yields a fresh worker that is adversarial with probability β.
//! All adversarial workers of a run are driven by one [`Strategy`] object,
//! which sees the past and present of the system through an
//! [`AdversaryView`] and draws its own coins from a dedicated stream.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::SupervisorState;
use crate::rng::SimRng;
use crate::taskgraph::{TaskGraph, TaskId};

/// Monotonically increasing sample index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WorkerId(pub u64);

impl fmt::Display for WorkerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "w{}", self.0)
    }
}

/// Hidden honesty bit fixed when the worker is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorkerTag {
    pub honest: bool,
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) || beta.is_nan() {
        return Err(Error::Config(format!("beta = {beta} is not a probability")));
    }
    Ok(())
}

/// Unbounded pool handing out fresh workers.
#[derive(Debug, Clone)]
pub struct WorkerPool {
    beta: f64,
    next: u64,
}

impl WorkerPool {
    pub fn new(beta: f64) -> Result<Self> {
        check_beta(beta)?;
        Ok(Self { beta, next: 0 })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Number of workers sampled so far.
    pub fn sampled(&self) -> u64 {
        self.next
    }

    /// A fresh worker, honest with probability `1 - β`, independent of all
    /// previous samples.
    pub fn sample_worker<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (WorkerId, WorkerTag) {
        let id = WorkerId(self.next);
        self.next += 1;
        let adversarial = rng.gen_bool(self.beta);
        (id, WorkerTag { honest: !adversarial })
    }
}

/// Expected number of samples until an honest worker appears: `1/(1-β)`.
pub fn expected_resamples(beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if beta >= 1.0 {
        return Err(Error::Divergent("no honest worker is ever sampled at beta = 1".into()));
    }
    Ok(1.0 / (1.0 - beta))
}

/// A worker assigned to a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub task: TaskId,
    pub worker: WorkerId,
    pub tag: WorkerTag,
}

/// Where an emitted payload goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Destination {
    Task(TaskId),
    Target,
}

/// Everything the adversary may condition on: the graph, the supervisor's
/// bookkeeping, this round's assignments and the worker currently holding
/// each finished task. Future sampling decisions and honest parties' private
/// coins are not reachable from here.
#[derive(Clone, Copy)]
pub struct AdversaryView<'a> {
    pub round: u64,
    pub graph: &'a TaskGraph,
    pub supervisor: &'a SupervisorState,
    pub scheduled: &'a [Assignment],
    pub holders: &'a [Option<Assignment>],
}

impl AdversaryView<'_> {
    /// Workers currently holding finished tasks, and how many of them are honest.
    pub fn honest_holders(&self) -> (usize, usize) {
        let held = self.holders.iter().flatten();
        let total = held.clone().count();
        (held.filter(|a| a.tag.honest).count(), total)
    }
}

/// Ways an adversarial worker can distort what it declares or sends. Each
/// application maps a kind onto its own payloads; kinds that make no sense
/// for an application degrade to [`Corruption::Garbage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Corruption {
    /// Arbitrary damage to the payload.
    Garbage,
    /// A plausible but wrong result (wrong product entry, duplicated item).
    WrongProduct,
    /// Split counts that add up but are distributed wrongly.
    CountSkew,
    /// Freshly invented data, digests or tags.
    Forge,
}

impl Corruption {
    pub const ALL: [Corruption; 4] = [
        Corruption::Garbage,
        Corruption::WrongProduct,
        Corruption::CountSkew,
        Corruption::Forge,
    ];
}

/// The report an adversarial worker files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdversaryReport {
    Silent,
    /// DONE, with the declaration optionally distorted.
    Done(Option<Corruption>),
    Reject(Vec<TaskId>),
}

/// What an adversarial worker sends when a successor or the target asks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Emission {
    Faithful,
    Corrupt(Corruption),
    Withhold,
}

/// Decision interface shared by all adversarial workers of a run. The
/// engine never calls it for honest workers.
pub trait Strategy: Send {
    fn name(&self) -> &'static str;

    /// Report of the adversarial worker executing `task` this round.
    fn report(&mut self, view: &AdversaryView<'_>, task: TaskId, rng: &mut SimRng) -> AdversaryReport;

    /// Emission of the adversarial worker holding finished `task`, requested by `dest`.
    fn emit(&mut self, view: &AdversaryView<'_>, task: TaskId, dest: Destination, rng: &mut SimRng) -> Emission;
}

/// Rejects the outputs of all predecessors, forcing a rollback each time.
#[derive(Debug, Default)]
pub struct AlwaysReject;

impl Strategy for AlwaysReject {
    fn name(&self) -> &'static str {
        "always-reject"
    }
    fn report(&mut self, view: &AdversaryView<'_>, task: TaskId, _: &mut SimRng) -> AdversaryReport {
        AdversaryReport::Reject(view.graph.preds(task).to_vec())
    }
    fn emit(&mut self, _: &AdversaryView<'_>, _: TaskId, _: Destination, _: &mut SimRng) -> Emission {
        Emission::Faithful
    }
}

/// Never reports.
#[derive(Debug, Default)]
pub struct Silent;

impl Strategy for Silent {
    fn name(&self) -> &'static str {
        "silent"
    }
    fn report(&mut self, _: &AdversaryView<'_>, _: TaskId, _: &mut SimRng) -> AdversaryReport {
        AdversaryReport::Silent
    }
    fn emit(&mut self, _: &AdversaryView<'_>, _: TaskId, _: Destination, _: &mut SimRng) -> Emission {
        Emission::Withhold
    }
}

/// Reports DONE honestly and sends damaged payloads downstream.
#[derive(Debug, Default)]
pub struct CorruptOutput;

impl Strategy for CorruptOutput {
    fn name(&self) -> &'static str {
        "corrupt-output"
    }
    fn report(&mut self, _: &AdversaryView<'_>, _: TaskId, _: &mut SimRng) -> AdversaryReport {
        AdversaryReport::Done(None)
    }
    fn emit(&mut self, _: &AdversaryView<'_>, _: TaskId, _: Destination, _: &mut SimRng) -> Emission {
        Emission::Corrupt(Corruption::Garbage)
    }
}

/// Behaves honestly except on hand-offs into a final task or the target.
#[derive(Debug, Default)]
pub struct HonestUntilEnd;

impl Strategy for HonestUntilEnd {
    fn name(&self) -> &'static str {
        "honest-until-end"
    }
    fn report(&mut self, view: &AdversaryView<'_>, task: TaskId, _: &mut SimRng) -> AdversaryReport {
        if view.graph.is_final(task) {
            AdversaryReport::Done(Some(Corruption::WrongProduct))
        } else {
            AdversaryReport::Done(None)
        }
    }
    fn emit(&mut self, view: &AdversaryView<'_>, _: TaskId, dest: Destination, _: &mut SimRng) -> Emission {
        match dest {
            Destination::Target => Emission::Corrupt(Corruption::WrongProduct),
            Destination::Task(w) if view.graph.is_final(w) => Emission::Corrupt(Corruption::WrongProduct),
            Destination::Task(_) => Emission::Faithful,
        }
    }
}

/// Declares skewed split counts and sends consistently skewed item streams.
#[derive(Debug, Default)]
pub struct CountCheat;

impl Strategy for CountCheat {
    fn name(&self) -> &'static str {
        "count-cheat"
    }
    fn report(&mut self, _: &AdversaryView<'_>, _: TaskId, _: &mut SimRng) -> AdversaryReport {
        AdversaryReport::Done(Some(Corruption::CountSkew))
    }
    fn emit(&mut self, _: &AdversaryView<'_>, _: TaskId, _: Destination, _: &mut SimRng) -> Emission {
        Emission::Corrupt(Corruption::CountSkew)
    }
}

/// Sends a wrong product and declares its digest.
#[derive(Debug, Default)]
pub struct WrongProduct;

impl Strategy for WrongProduct {
    fn name(&self) -> &'static str {
        "wrong-product"
    }
    fn report(&mut self, _: &AdversaryView<'_>, _: TaskId, _: &mut SimRng) -> AdversaryReport {
        AdversaryReport::Done(Some(Corruption::WrongProduct))
    }
    fn emit(&mut self, _: &AdversaryView<'_>, _: TaskId, _: Destination, _: &mut SimRng) -> Emission {
        Emission::Corrupt(Corruption::WrongProduct)
    }
}

/// Invents digests, tags and data wholesale.
#[derive(Debug, Default)]
pub struct ForgeEverything;

impl Strategy for ForgeEverything {
    fn name(&self) -> &'static str {
        "forge-everything"
    }
    fn report(&mut self, _: &AdversaryView<'_>, _: TaskId, _: &mut SimRng) -> AdversaryReport {
        AdversaryReport::Done(Some(Corruption::Forge))
    }
    fn emit(&mut self, _: &AdversaryView<'_>, _: TaskId, _: Destination, _: &mut SimRng) -> Emission {
        Emission::Corrupt(Corruption::Forge)
    }
}

/// Picks uniformly among the behaviors of the other strategies, per decision.
#[derive(Debug, Default)]
pub struct RandomMix;

impl Strategy for RandomMix {
    fn name(&self) -> &'static str {
        "random-mix"
    }
    fn report(&mut self, view: &AdversaryView<'_>, task: TaskId, rng: &mut SimRng) -> AdversaryReport {
        match rng.gen_range(0..4) {
            0 => AdversaryReport::Silent,
            1 => AdversaryReport::Reject(view.graph.preds(task).to_vec()),
            2 => AdversaryReport::Done(None),
            _ => AdversaryReport::Done(Corruption::ALL.choose(rng).copied()),
        }
    }
    fn emit(&mut self, _: &AdversaryView<'_>, _: TaskId, _: Destination, rng: &mut SimRng) -> Emission {
        match rng.gen_range(0..3) {
            0 => Emission::Faithful,
            1 => Emission::Withhold,
            _ => Emission::Corrupt(*Corruption::ALL.choose(rng).expect("nonempty")),
        }
    }
}

/// Applications a strategy is meaningful for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Applicability {
    Any,
    Matmul,
    Mergesort,
}

/// Catalog entry of a built-in strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrategyInfo {
    pub name: &'static str,
    pub summary: &'static str,
    pub applies_to: Applicability,
}

/// The built-in suite.
pub fn builtin_strategies() -> Vec<StrategyInfo> {
    use Applicability::*;
    vec![
        StrategyInfo {
            name: "always-reject",
            summary: "rejects all inputs",
            applies_to: Any,
        },
        StrategyInfo {
            name: "silent",
            summary: "never reports",
            applies_to: Any,
        },
        StrategyInfo {
            name: "corrupt-output",
            summary: "reports DONE, sends damaged payloads",
            applies_to: Any,
        },
        StrategyInfo {
            name: "honest-until-end",
            summary: "honest until the hand-off to a final task or the target",
            applies_to: Any,
        },
        StrategyInfo {
            name: "count-cheat",
            summary: "declares skewed split counts",
            applies_to: Mergesort,
        },
        StrategyInfo {
            name: "wrong-product",
            summary: "sends a wrong product block",
            applies_to: Matmul,
        },
        StrategyInfo {
            name: "random-mix",
            summary: "uniform choice among the behaviors above, per decision",
            applies_to: Any,
        },
        StrategyInfo {
            name: "forge-everything",
            summary: "invents tags, digests and data",
            applies_to: Any,
        },
    ]
}

/// A strategy chosen by name, with optional numeric parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

impl StrategySpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            params: BTreeMap::new(),
        }
    }
}

fn canonical_name(name: &str) -> Result<&'static str> {
    let key: String = name
        .chars()
        .filter(|c| *c != '-' && *c != '_')
        .flat_map(char::to_lowercase)
        .collect();
    builtin_strategies()
        .into_iter()
        .find(|s| s.name.replace('-', "") == key)
        .map(|s| s.name)
        .ok_or_else(|| Error::Config(format!("unknown strategy '{name}'")))
}

/// Looks up a catalog entry, accepting `kebab-case`, `snake_case` or `CamelCase`.
pub fn strategy_info(name: &str) -> Result<StrategyInfo> {
    let canonical = canonical_name(name)?;
    Ok(builtin_strategies()
        .into_iter()
        .find(|s| s.name == canonical)
        .expect("canonical name is in the catalog"))
}

/// Instantiates a built-in strategy.
pub fn make_strategy(spec: &StrategySpec) -> Result<Box<dyn Strategy>> {
    if let Some(p) = spec.params.keys().next() {
        return Err(Error::Config(format!(
            "strategy '{}' takes no parameter '{p}'",
            spec.name
        )));
    }
    Ok(match canonical_name(&spec.name)? {
        "always-reject" => Box::new(AlwaysReject),
        "silent" => Box::new(Silent),
        "corrupt-output" => Box::new(CorruptOutput),
        "honest-until-end" => Box::new(HonestUntilEnd),
        "count-cheat" => Box::new(CountCheat),
        "wrong-product" => Box::new(WrongProduct),
        "random-mix" => Box::new(RandomMix),
        "forge-everything" => Box::new(ForgeEverything),
        other => unreachable!("catalog entry {other} without constructor"),
    })
}
