//! Seeded discrete-event model of asynchronous execution: which core
//! commits next, which block it updates, the per-component staleness of its
//! read, its minibatch, and the elapsed virtual time.

mod ring;
mod validate;

pub use ring::HistoryRing;
pub use validate::{validate_model, ClassFrequency, Flag, FlagKind, ModelReport, DEFAULT_WINDOW};

use std::fmt::Write as _;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::BlockPartition;

/// Law of the per-component read delays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DelayModel {
    /// Uniform on `{0..δ}`.
    Uniform,
    /// `P(d) ∝ ratio^d` on `{0..δ}`.
    Geometric { ratio: f64 },
    /// Zero when the reading core wrote the component last, otherwise
    /// geometric with `ratio`.
    LastWriter { ratio: f64 },
}

/// Law of the virtual time between a core's successive commits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DtauModel {
    Constant { value: f64 },
    /// Exponential with scale `mean`, truncated to `(0, cap]`.
    Exponential { mean: f64, cap: f64 },
}

impl DtauModel {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            DtauModel::Constant { value } => value > 0.0 && value.is_finite(),
            DtauModel::Exponential { mean, cap } => mean > 0.0 && cap > 0.0 && cap.is_finite() && mean.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("elapsed-time law {self:?} needs positive finite parameters")))
        }
    }

    /// Exact mean of the (truncated) law.
    pub fn expected(&self) -> f64 {
        match *self {
            DtauModel::Constant { value } => value,
            DtauModel::Exponential { mean, cap } => {
                let tail = (-cap / mean).exp();
                mean - cap * tail / (1.0 - tail)
            }
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            DtauModel::Constant { value } => value,
            DtauModel::Exponential { mean, cap } => {
                // inverse CDF of the truncated law, u in (0, 1]
                let u = 1.0 - rng.gen::<f64>();
                let span = -(-cap / mean).exp_m1();
                (-mean * (-u * span).ln_1p()).min(cap)
            }
        }
    }
}

/// Configuration of the asynchrony model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsyncConfig {
    pub partition: BlockPartition,
    /// Bound δ on every read delay.
    pub staleness: u32,
    /// Declared floor on the conditional probability of each block.
    pub p_min: f64,
    pub delay: DelayModel,
    pub dtau: DtauModel,
    /// Per-core overrides of `dtau` (empty: every core uses `dtau`).
    #[serde(default)]
    pub core_dtau: Vec<DtauModel>,
    /// Minibatch size `b`.
    pub batch: usize,
    pub seed: u64,
    /// Test hook: report a delay of `δ + 1` on component 0 at this iteration.
    #[serde(default)]
    pub inject_delay_violation_at: Option<u64>,
}

impl AsyncConfig {
    /// Defaults: uniform delays, unit constant elapsed times, `p_min` at its
    /// largest admissible value.
    pub fn new(partition: BlockPartition, staleness: u32, batch: usize, seed: u64) -> Self {
        let p_min = 1.0 / partition.blocks().len() as f64;
        Self {
            partition,
            staleness,
            p_min,
            delay: DelayModel::Uniform,
            dtau: DtauModel::Constant { value: 1.0 },
            core_dtau: Vec::new(),
            batch,
            seed,
            inject_delay_violation_at: None,
        }
    }

    pub fn cores(&self) -> usize {
        self.partition.cores()
    }

    pub fn dtau_of(&self, core: usize) -> DtauModel {
        self.core_dtau.get(core).copied().unwrap_or(self.dtau)
    }

    pub fn validate(&self, num_samples: usize) -> Result<()> {
        if self.batch == 0 || self.batch > num_samples {
            return Err(Error::Config(format!(
                "batch size {} must lie in 1..={num_samples}",
                self.batch
            )));
        }
        let classes = self.partition.blocks().len() as f64;
        if !(self.p_min > 0.0 && self.p_min <= 1.0 / classes + 1e-12) {
            return Err(Error::Config(format!(
                "p_min = {} must lie in (0, 1/{classes}]",
                self.p_min
            )));
        }
        match self.delay {
            DelayModel::Uniform => {}
            DelayModel::Geometric { ratio } | DelayModel::LastWriter { ratio } => {
                if !(ratio > 0.0 && ratio <= 1.0) {
                    return Err(Error::Config("delay ratio must lie in (0, 1]".into()));
                }
            }
        }
        if !self.core_dtau.is_empty() && self.core_dtau.len() != self.cores() {
            return Err(Error::Config("core_dtau needs one entry per core".into()));
        }
        self.dtau.validate()?;
        self.core_dtau.iter().try_for_each(DtauModel::validate)
    }
}

/// One scheduled update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Global iteration counter.
    pub k: u64,
    pub core: usize,
    /// Block id in the partition.
    pub block: usize,
    /// Per-component read delays, length `n`.
    pub delays: Vec<u32>,
    /// Sorted minibatch sample indices.
    pub batch: Vec<usize>,
    /// Virtual time the core spent on this update.
    pub dtau: f64,
    /// Virtual commit time.
    pub time: f64,
    /// This core's update count before the event (its local step index).
    pub local_step: u64,
}

/// One core's in-flight update as drawn when it starts.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub block: usize,
    pub batch: Vec<usize>,
    pub dtau: f64,
}

/// A core's private draw sequence: elapsed time, block, minibatch, in that
/// order per job. Both the simulator and the threaded executor draw from
/// this, so one seed gives one job sequence per core.
#[derive(Debug, Clone)]
pub struct CoreStream {
    rng: ChaCha8Rng,
    blocks: Vec<usize>,
    law: DtauModel,
    num_samples: usize,
    batch: usize,
}

impl CoreStream {
    pub fn new(config: &AsyncConfig, core: usize, num_samples: usize) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(stream_seed(config.seed, core as u64 + 1)),
            blocks: config.partition.core_blocks(core).to_vec(),
            law: config.dtau_of(core),
            num_samples,
            batch: config.batch,
        }
    }

    pub fn next_job(&mut self) -> Job {
        let dtau = self.law.draw(&mut self.rng);
        let block = self.blocks[self.rng.gen_range(0..self.blocks.len())];
        let mut batch = index::sample(&mut self.rng, self.num_samples, self.batch).into_vec();
        batch.sort_unstable();
        Job { block, batch, dtau }
    }
}

/// Deterministic race between cores: each core's in-flight update finishes
/// after its drawn elapsed time; the earliest finisher commits next (ties go
/// to the lowest core id).
#[derive(Debug, Clone)]
pub struct EventGenerator {
    config: AsyncConfig,
    streams: Vec<CoreStream>,
    delay_rng: ChaCha8Rng,
    jobs: Vec<(Job, f64)>,
    last_writer: Vec<Option<usize>>,
    counters: Vec<u64>,
    k: u64,
}

fn stream_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over (seed, stream)
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl EventGenerator {
    pub fn new(config: AsyncConfig, num_samples: usize) -> Result<Self> {
        config.validate(num_samples)?;
        let cores = config.cores();
        let n = config.partition.dim();
        let mut streams: Vec<CoreStream> = (0..cores).map(|c| CoreStream::new(&config, c, num_samples)).collect();
        let jobs = streams
            .iter_mut()
            .map(|s| {
                let job = s.next_job();
                let done = job.dtau;
                (job, done)
            })
            .collect();
        let delay_rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, 0));
        Ok(Self {
            config,
            streams,
            delay_rng,
            jobs,
            last_writer: vec![None; n],
            counters: vec![0; cores],
            k: 0,
        })
    }

    pub fn config(&self) -> &AsyncConfig {
        &self.config
    }

    /// `ν(c, k)`: updates performed by each core so far.
    pub fn counters(&self) -> &[u64] {
        &self.counters
    }

    fn geometric(&mut self, ratio: f64) -> u32 {
        let delta = self.config.staleness;
        if delta == 0 {
            return 0;
        }
        let weights: Vec<f64> = (0..=delta).map(|d| ratio.powi(d as i32)).collect();
        let total: f64 = weights.iter().sum();
        let mut u = self.delay_rng.gen::<f64>() * total;
        for (d, w) in weights.iter().enumerate() {
            if u < *w {
                return d as u32;
            }
            u -= w;
        }
        delta
    }

    fn draw_delays(&mut self, core: usize) -> Vec<u32> {
        let n = self.config.partition.dim();
        let delta = self.config.staleness;
        (0..n)
            .map(|j| match self.config.delay {
                DelayModel::Uniform => self.delay_rng.gen_range(0..=delta),
                DelayModel::Geometric { ratio } => self.geometric(ratio),
                DelayModel::LastWriter { ratio } => {
                    if self.last_writer[j] == Some(core) {
                        0
                    } else {
                        self.geometric(ratio)
                    }
                }
            })
            .collect()
    }

    pub fn next_event(&mut self) -> Event {
        let core = (0..self.jobs.len())
            .min_by(|&a, &b| self.jobs[a].1.total_cmp(&self.jobs[b].1).then(a.cmp(&b)))
            .expect("at least one core");
        let mut delays = self.draw_delays(core);
        if self.config.inject_delay_violation_at == Some(self.k) {
            delays[0] = self.config.staleness + 1;
        }
        let time = self.jobs[core].1;
        let next = self.streams[core].next_job();
        let next_done = time + next.dtau;
        let (job, _) = std::mem::replace(&mut self.jobs[core], (next, next_done));
        for &j in self.config.partition.block(job.block) {
            self.last_writer[j] = Some(core);
        }
        let ev = Event {
            k: self.k,
            core,
            block: job.block,
            delays,
            batch: job.batch,
            dtau: job.dtau,
            time,
            local_step: self.counters[core],
        };
        self.counters[core] += 1;
        self.k += 1;
        ev
    }

    pub fn take(&mut self, count: usize) -> Vec<Event> {
        (0..count).map(|_| self.next_event()).collect()
    }
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    let mut s = String::new();
    for (i, v) in items.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v}");
    }
    s
}

/// `k, c, i-list, d-list, xi-list, dtau` with space-separated lists and the
/// elapsed time printed round-trip exact.
pub fn format_event(ev: &Event, partition: &BlockPartition) -> String {
    format!(
        "{}, {}, {}, {}, {}, {:e}",
        ev.k,
        ev.core,
        join(partition.block(ev.block)),
        join(&ev.delays),
        join(&ev.batch),
        ev.dtau
    )
}

/// Inverse of [`format_event`]. The block id is recovered from the
/// partition; commit times are re-accumulated per core.
pub fn parse_events(text: &str, partition: &BlockPartition) -> Result<Vec<Event>> {
    let mut out = Vec::new();
    let mut clocks = vec![0.0; partition.cores()];
    let mut counters = vec![0u64; partition.cores()];
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Input(format!("event line {}: {what}", line_no + 1));
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(bad("expected 6 comma-separated fields"));
        }
        let list = |s: &str| -> Result<Vec<usize>> {
            s.split_whitespace()
                .map(|t| t.parse().map_err(|_| bad("bad integer list")))
                .collect()
        };
        let k: u64 = fields[0].parse().map_err(|_| bad("bad k"))?;
        let core: usize = fields[1].parse().map_err(|_| bad("bad core"))?;
        if core >= partition.cores() {
            return Err(bad("core out of range"));
        }
        let comps = list(fields[2])?;
        let block = partition
            .blocks()
            .iter()
            .position(|b| *b == comps)
            .ok_or_else(|| bad("block is not in the partition"))?;
        let delays = list(fields[3])?.into_iter().map(|d| d as u32).collect();
        let batch = list(fields[4])?;
        let dtau: f64 = fields[5].parse().map_err(|_| bad("bad dtau"))?;
        clocks[core] += dtau;
        out.push(Event {
            k,
            core,
            block,
            delays,
            batch,
            dtau,
            time: clocks[core],
            local_step: counters[core],
        });
        counters[core] += 1;
    }
    Ok(out)
}
