use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::adversary::{make_strategy, StrategySpec};
use crate::error::{Error, Result};
use crate::protocol::{Mode, TargetPolicy};

/// Application driven by an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AppKind {
    /// A path of `n` generic tasks.
    Path,
    /// A random leveled DAG, one per seed.
    Dag,
    /// Matrix multiplication of two `m × m` matrices split into `k = √n` stripes.
    Matmul,
    /// Sorting `m` values in `n` blocks.
    Mergesort,
}

impl AppKind {
    pub fn default_mode(self) -> Mode {
        match self {
            AppKind::Path => Mode::Path,
            _ => Mode::Dag,
        }
    }
}

/// Shape of random leveled DAGs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DagShape {
    /// Number of levels.
    pub depth: usize,
    /// Tasks per level.
    pub width: usize,
    /// In-degree of every non-initial task.
    pub degree: usize,
}

/// Instance files replacing the randomly drawn instance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFiles {
    /// Dense binary matrix `A` (see [`crate::verify::Matrix::read_dense`]).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<PathBuf>,
    /// Whitespace-separated unsigned 64-bit values to sort.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<PathBuf>,
}

impl InputFiles {
    pub fn is_empty(&self) -> bool {
        self.a.is_none() && self.b.is_none() && self.values.is_none()
    }
}

/// Fraction of trials that must finish within `bound` rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundsWithin {
    pub bound: u64,
    pub min_fraction: f64,
}

/// Ceilings checked after a batch. Unset ceilings are not checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ceilings {
    /// Every trial terminates within this many rounds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_rounds: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rounds_within: Option<RoundsWithin>,
    /// Mean source transmissions per initial task.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_source_sends: Option<f64>,
    /// Mean target deliveries per final task.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_target_receives: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_comp_work: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_comm_work: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_mul_adds: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_per_task_items: Option<u64>,
    /// Fraction of trials ending with an honest majority among the workers
    /// holding finished tasks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_honest_majority_fraction: Option<f64>,
    /// Every terminated trial produced the oracle output.
    pub require_correct: bool,
    /// Every trial terminated.
    pub require_terminated: bool,
}

impl Default for Ceilings {
    fn default() -> Self {
        Self {
            max_rounds: None,
            rounds_within: None,
            mean_source_sends: None,
            mean_target_receives: None,
            mean_comp_work: None,
            mean_comm_work: None,
            max_mul_adds: None,
            max_per_task_items: None,
            min_honest_majority_fraction: None,
            require_correct: true,
            require_terminated: false,
        }
    }
}

/// A batch of trials, one per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub app: AppKind,
    /// Path length, number of sorting blocks, or `k²` for matmul.
    pub n: usize,
    /// Matrix dimension or number of values to sort.
    pub m: usize,
    pub beta: f64,
    /// Freivalds repetitions.
    pub tau: u32,
    /// List-length constant: lists have `⌈c·log₂ n⌉` tasks.
    pub c: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dag: Option<DagShape>,
    pub strategy: StrategySpec,
    pub seeds: Vec<u64>,
    /// Defaults to `64·(D + ⌈log₂ n⌉ + 1)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub round_cap: Option<u64>,
    /// Defaults to `path` for the path app and `dag` otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub target: TargetPolicy,
    pub check_invariants: bool,
    pub trace: bool,
    pub ceilings: Ceilings,
    #[serde(skip_serializing_if = "InputFiles::is_empty")]
    pub inputs: InputFiles,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            app: AppKind::Path,
            n: 16,
            m: 0,
            beta: 0.0,
            tau: 8,
            c: 1,
            dag: None,
            strategy: StrategySpec::named("random-mix"),
            seeds: vec![0],
            round_cap: None,
            mode: None,
            target: TargetPolicy::Verify,
            check_invariants: false,
            trace: false,
            ceilings: Ceilings::default(),
            inputs: InputFiles::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn mode(&self) -> Mode {
        self.mode.unwrap_or_else(|| self.app.default_mode())
    }

    /// Stripe count `k` of a matmul experiment.
    pub fn matmul_k(&self) -> Result<usize> {
        let k = (self.n as f64).sqrt().round() as usize;
        if k * k != self.n {
            return Err(Error::Config(format!("matmul needs n = k², got n = {}", self.n)));
        }
        Ok(k)
    }

    /// Checks everything that does not need the instance itself and returns
    /// warnings about parameters outside the proven regime.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if !(0.0..=1.0).contains(&self.beta) || self.beta.is_nan() {
            return Err(Error::Config(format!("beta = {} is not a probability", self.beta)));
        }
        if self.c == 0 {
            return Err(Error::Config("c must be positive".into()));
        }
        if self.round_cap == Some(0) {
            return Err(Error::Config("round cap must be at least 1".into()));
        }
        make_strategy(&self.strategy)?;
        if self.mode() == Mode::Path && self.app != AppKind::Path {
            return Err(Error::Config("path mode needs the path app".into()));
        }
        match self.app {
            AppKind::Path => {
                if self.n == 0 {
                    return Err(Error::Config("path needs n ≥ 1".into()));
                }
            }
            AppKind::Dag => {
                let shape = self
                    .dag
                    .ok_or_else(|| Error::Config("dag app needs a dag shape".into()))?;
                if shape.depth == 0 || shape.width == 0 || shape.degree == 0 || shape.degree > shape.width {
                    return Err(Error::Config(format!("invalid dag shape {shape:?}")));
                }
            }
            AppKind::Matmul => {
                let k = self.matmul_k()?;
                if self.inputs.a.is_none() != self.inputs.b.is_none() {
                    return Err(Error::Config("matrix files come in pairs".into()));
                }
                if self.inputs.a.is_none() {
                    crate::matmul::validate_sizes(self.m, k)?;
                }
                if self.tau == 0 {
                    return Err(Error::Config("tau must be positive".into()));
                }
                let excess = self.beta + 0.5f64.powi(self.tau as i32);
                if excess > 1.0 / 200.0 {
                    warnings.push(format!(
                        "beta + 2^-tau = {excess:.6} exceeds 1/200; correctness still holds, the runtime bound is not guaranteed"
                    ));
                }
            }
            AppKind::Mergesort => {
                if self.inputs.values.is_none() {
                    crate::mergesort::validate_sizes(self.m, self.n)?;
                }
            }
        }
        if self.beta >= 1.0 {
            warnings.push("beta = 1: runs cannot terminate".into());
        }
        Ok(warnings)
    }
}
