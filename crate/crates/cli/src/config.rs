//! Run configuration: a TOML file naming the problem, the algorithm, the
//! asynchrony model, the step-size schedule and the executor.

use std::path::{Path, PathBuf};

use passm::cell::CellKind;
use passm::engine::{passm_plus_plan, Mode, ModePlan, RunOptions, StepSchedule};
use passm::oracle::{BlockPartition, Problem, ProblemSpec};
use passm::sched::{AsyncConfig, DelayModel, DtauModel};
use passm::shmexec::LockMode;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Every core updates the full vector.
    Assm,
    /// Each core updates only the blocks it owns.
    Passm,
    /// Epoch plan alternating the two around the dampening epochs.
    PassmPlus,
    /// Single-process momentum subgradient descent.
    Sequential,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Assm => "assm",
            Algorithm::Passm => "passm",
            Algorithm::PassmPlus => "passm-plus",
            Algorithm::Sequential => "sequential",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Executor {
    #[default]
    Simulated,
    Threaded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionKind {
    /// `shared` for full-vector algorithms, otherwise `layers` on networks
    /// with enough layers and `contiguous` elsewhere.
    #[default]
    Auto,
    /// One block holding every component, owned by all cores.
    Shared,
    /// Equal contiguous slices, one per core.
    Contiguous,
    /// The problem's natural blocks (network layers) dealt round-robin.
    Layers,
}

/// What `run` does with a schedule that fails a step-size condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulePolicy {
    #[default]
    Reject,
    Warn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsyncSection {
    pub cores: usize,
    pub staleness: u32,
    pub batch: usize,
    #[serde(default)]
    pub partition: PartitionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay: Option<DelayModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtau: Option<DtauModel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub core_dtau: Vec<DtauModel>,
    /// Test hook: force a delay of `staleness + 1` at this iteration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inject_delay_violation_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub total_epochs: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dampen_epochs: Vec<u32>,
    /// Explicit switch epochs; overrides the plan derived from
    /// `dampen_epochs`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_epochs: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Run log path; relative paths resolve against `PASSM_OUT_DIR` or the
    /// working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log: Option<PathBuf>,
}

impl OutputSection {
    fn is_empty(&self) -> bool {
        self.log.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub executor: Executor,
    #[serde(default)]
    pub lock: LockMode,
    #[serde(default)]
    pub momentum: f64,
    pub budget: u64,
    #[serde(default)]
    pub schedule_policy: SchedulePolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<CellKind>,
    pub problem: ProblemSpec,
    pub schedule: StepSchedule,
    #[serde(rename = "async")]
    pub asynchrony: AsyncSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanSection>,
    #[serde(default, skip_serializing_if = "OutputSection::is_empty")]
    pub output: OutputSection,
}

/// Command-line adjustments applied before resolution.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    /// Caps the number of cores.
    pub threads: Option<usize>,
}

/// Everything a run needs, built from a resolved config.
#[derive(Debug, Clone)]
pub struct Setup {
    pub problem: Problem,
    pub asynchrony: AsyncConfig,
    pub schedule: StepSchedule,
    pub plan: ModePlan,
    pub options: RunOptions,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Same run with every default made explicit and external data inlined,
    /// so the result alone reproduces it. Output paths are dropped.
    pub fn resolve(&self, base: Option<&Path>, overrides: Overrides) -> Result<RunConfig> {
        let mut out = self.clone();
        if let Some(seed) = overrides.seed {
            out.seed = seed;
        }
        if let Some(cap) = overrides.threads {
            if cap == 0 {
                return Err(CliError::Config("--threads must be positive".into()));
            }
            out.asynchrony.cores = out.asynchrony.cores.min(cap);
        }
        out.problem = self.problem.resolve(base)?;
        out.output = OutputSection::default();
        let problem = out.problem.build(None)?;
        let a = &mut out.asynchrony;
        if a.partition == PartitionKind::Auto {
            a.partition = match out.algorithm {
                Algorithm::Assm | Algorithm::Sequential => PartitionKind::Shared,
                _ if problem.natural_blocks().len() >= a.cores.max(2) => PartitionKind::Layers,
                _ => PartitionKind::Contiguous,
            };
        }
        a.delay.get_or_insert(DelayModel::Uniform);
        a.dtau.get_or_insert(DtauModel::Constant { value: 1.0 });
        if a.p_min.is_none() {
            a.p_min = Some(1.0 / partition(&problem, a.partition, a.cores)?.blocks().len() as f64);
        }
        match (out.executor, out.cell) {
            (Executor::Threaded, Some(CellKind::Float)) => {
                return Err(CliError::Config("the threaded executor stores fixed-point cells".into()));
            }
            (Executor::Threaded, None) => out.cell = Some(CellKind::Fixed),
            (Executor::Simulated, None) => out.cell = Some(CellKind::Float),
            _ => {}
        }
        if out.algorithm == Algorithm::PassmPlus && out.plan.is_none() {
            return Err(CliError::Config("passm-plus needs a [plan] section".into()));
        }
        if out.algorithm == Algorithm::Sequential && out.executor == Executor::Threaded {
            return Err(CliError::Config("the sequential algorithm has no threaded executor".into()));
        }
        Ok(out)
    }

    /// Construct the problem, asynchrony model, plan and options.
    pub fn setup(&self) -> Result<Setup> {
        let problem = self.problem.build(None)?;
        let a = &self.asynchrony;
        let mut asynchrony = AsyncConfig::new(partition(&problem, a.partition, a.cores)?, a.staleness, a.batch, self.seed);
        if let Some(p) = a.p_min {
            asynchrony.p_min = p;
        }
        if let Some(d) = a.delay {
            asynchrony.delay = d;
        }
        if let Some(d) = a.dtau {
            asynchrony.dtau = d;
        }
        asynchrony.core_dtau = a.core_dtau.clone();
        asynchrony.inject_delay_violation_at = a.inject_delay_violation_at;
        asynchrony.validate(problem.num_samples())?;
        let plan = match self.algorithm {
            Algorithm::Assm | Algorithm::Sequential => ModePlan::constant(Mode::Assm),
            Algorithm::Passm => ModePlan::constant(Mode::Passm),
            Algorithm::PassmPlus => {
                let p = self
                    .plan
                    .as_ref()
                    .ok_or_else(|| CliError::Config("passm-plus needs a [plan] section".into()))?;
                match &p.switch_epochs {
                    Some(s) => ModePlan::from_switch_epochs(p.total_epochs, s, a.cores)?,
                    None => passm_plus_plan(p.total_epochs, &p.dampen_epochs, a.cores)?,
                }
            }
        };
        let mut options = RunOptions::new(self.momentum, self.budget);
        options.x0 = self.x0.clone();
        options.cell = self.cell.unwrap_or(CellKind::Float);
        Ok(Setup {
            problem,
            asynchrony,
            schedule: self.schedule.clone(),
            plan,
            options,
        })
    }
}

fn partition(problem: &Problem, kind: PartitionKind, cores: usize) -> Result<BlockPartition> {
    let dim = problem.dim();
    Ok(match kind {
        PartitionKind::Auto | PartitionKind::Shared => BlockPartition::shared(dim, cores)?,
        PartitionKind::Contiguous => BlockPartition::contiguous(dim, cores)?,
        PartitionKind::Layers => BlockPartition::deal(dim, problem.natural_blocks(), cores)?,
    })
}

/// Where a relative output path lands.
pub fn output_root() -> PathBuf {
    std::env::var_os("PASSM_OUT_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}
