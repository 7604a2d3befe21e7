//! Multi-threaded shared-memory executor: worker threads over a vector of
//! atomic fixed-point cells, committing with fetch-and-add under the
//! mode's locking discipline, and recording what actually happened.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicI64, AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cell::{from_fixed, to_fixed, CellKind};
use crate::engine::{discretize_gamma, step_delta, Mode, ModePlan, RunOptions, StepSchedule};
use crate::error::{check_dim, Error, Result};
use crate::oracle::Problem;
use crate::sched::{AsyncConfig, CoreStream};
use crate::trace::{Trace, TraceRecord, WallClock};

/// Locking discipline of full-vector updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LockMode {
    /// Lock only around the write.
    #[default]
    WriteOnly,
    /// Hold one lock across read, subgradient, and write.
    Strict,
}

/// Shared parameter vector of atomic fixed-point cells with per-component
/// write counters and per-block write locks.
#[derive(Debug)]
pub struct SharedVector {
    cells: Vec<AtomicI64>,
    versions: Vec<AtomicU64>,
    block_locks: Vec<Mutex<()>>,
    strict_lock: Mutex<()>,
}

impl SharedVector {
    pub fn new(x0: &[f64], blocks: usize) -> Self {
        Self {
            cells: x0.iter().map(|&v| AtomicI64::new(to_fixed(v))).collect(),
            versions: x0.iter().map(|_| AtomicU64::new(0)).collect(),
            block_locks: (0..blocks.max(1)).map(|_| Mutex::new(())).collect(),
            strict_lock: Mutex::new(()),
        }
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn load(&self, j: usize) -> f64 {
        from_fixed(self.cells[j].load(Ordering::Acquire))
    }

    pub fn version(&self, j: usize) -> u64 {
        self.versions[j].load(Ordering::Acquire)
    }

    /// Atomically add `delta` (in cell units) to component `j`, returning
    /// the value before the add.
    pub fn fetch_add(&self, j: usize, delta: i64) -> i64 {
        let prev = self.cells[j].fetch_add(delta, Ordering::AcqRel);
        self.versions[j].fetch_add(1, Ordering::AcqRel);
        prev
    }

    pub fn snapshot(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| self.load(j)).collect()
    }
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    // a poisoned lock only means another worker panicked; the run is
    // reported as failed when that worker is joined
    m.lock().unwrap_or_else(|e| e.into_inner())
}

pub fn hardware_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

struct Shared<'a> {
    config: &'a AsyncConfig,
    problem: &'a Problem,
    schedule: &'a StepSchedule,
    plan: &'a ModePlan,
    momentum: f64,
    budget: u64,
    lock_mode: LockMode,
    vector: SharedVector,
    tickets: AtomicU64,
    commits: AtomicU64,
    start: Instant,
}

fn nanos(start: Instant) -> u64 {
    start.elapsed().as_nanos() as u64
}

fn worker(shared: &Shared<'_>, core: usize) -> Result<Vec<TraceRecord>> {
    let n = shared.vector.dim();
    let partition = &shared.config.partition;
    let mut stream = CoreStream::new(shared.config, core, shared.problem.num_samples());
    let mut buf = vec![0.0; n];
    let mut clock = 0.0;
    let mut local = 0u64;
    let mut last_commit = Instant::now();
    let mut out = Vec::new();
    let m = shared.momentum;
    let all: Vec<usize> = (0..n).collect();
    loop {
        let ticket = shared.tickets.fetch_add(1, Ordering::AcqRel);
        if ticket >= shared.budget {
            break;
        }
        let job = stream.next_job();
        let mode = shared.plan.mode_at(ticket, shared.budget);
        let mult = shared.plan.multiplier_at(ticket, shared.budget);
        let components: Vec<usize> = match mode {
            Mode::Assm => all.clone(),
            Mode::Passm => partition.block(job.block).to_vec(),
        };
        let full = mode == Mode::Assm;
        let strict = (full && shared.lock_mode == LockMode::Strict).then(|| lock(&shared.vector.strict_lock));
        let strict_at = strict.as_ref().map(|_| nanos(shared.start));

        let read_ns = nanos(shared.start);
        let read_versions: Vec<u64> = (0..n).map(|j| shared.vector.version(j)).collect();
        let view: Vec<f64> = (0..n).map(|j| shared.vector.load(j)).collect();
        let (y, flops) = shared.problem.block_subgrad(&view, &job.batch, &components)?;
        let gamma = discretize_gamma(shared.schedule, clock, job.dtau) * mult;

        let mut deltas = Vec::with_capacity(components.len());
        for (&j, &yj) in components.iter().zip(&y) {
            buf[j] = m * buf[j] + yj;
            deltas.push(to_fixed(step_delta(buf[j], gamma, m)));
        }

        let guards: Vec<_> = if full && strict.is_none() {
            shared.vector.block_locks.iter().map(lock).collect()
        } else {
            Vec::new()
        };
        let lock_acquired = strict_at.or_else(|| (!guards.is_empty()).then(|| nanos(shared.start)));
        let delays: Vec<u32> = (0..n)
            .map(|j| (shared.vector.version(j) - read_versions[j]).min(u32::MAX as u64) as u32)
            .collect();
        let k = shared.commits.fetch_add(1, Ordering::AcqRel);
        let mut values = Vec::with_capacity(components.len());
        for (&j, &d) in components.iter().zip(&deltas) {
            let prev = shared.vector.fetch_add(j, d);
            values.push(from_fixed(prev + d));
        }
        let commit_ns = nanos(shared.start);
        // stamped while still held, so recorded intervals nest inside the real ones
        let lock_released = lock_acquired.map(|_| nanos(shared.start));
        drop(guards);
        drop(strict);

        clock += job.dtau;
        let now = Instant::now();
        let elapsed_s = now.duration_since(last_commit).as_secs_f64();
        last_commit = now;
        out.push(TraceRecord {
            k,
            core,
            mode,
            components,
            time: clock,
            dtau: job.dtau,
            local_step: local,
            gamma,
            delays,
            batch: job.batch,
            y,
            delta: deltas.into_iter().map(from_fixed).collect(),
            values,
            flops,
            view: Some(view),
            wall: Some(WallClock {
                read_ns,
                commit_ns,
                lock_acquired_ns: lock_acquired,
                lock_released_ns: lock_released,
                elapsed_s,
            }),
        });
        local += 1;
    }
    Ok(out)
}

/// Launch one worker thread per core and run until `opts.budget` commits.
/// Records come back ordered by commit counter.
pub fn spawn_run(
    config: &AsyncConfig,
    problem: &Problem,
    schedule: &StepSchedule,
    plan: &ModePlan,
    opts: &RunOptions,
    lock_mode: LockMode,
) -> Result<Trace> {
    schedule.check()?;
    config.validate(problem.num_samples())?;
    if !(0.0..1.0).contains(&opts.momentum) {
        return Err(Error::Config(format!("momentum {} must lie in [0, 1)", opts.momentum)));
    }
    check_dim(problem.dim(), config.partition.dim())?;
    let x0: Vec<f64> = opts
        .x0
        .clone()
        .unwrap_or_else(|| problem.default_x0())
        .into_iter()
        .map(|v| CellKind::Fixed.quantize(v))
        .collect();
    check_dim(problem.dim(), x0.len())?;
    let shared = Shared {
        config,
        problem,
        schedule,
        plan,
        momentum: opts.momentum,
        budget: opts.budget,
        lock_mode,
        vector: SharedVector::new(&x0, config.partition.blocks().len()),
        tickets: AtomicU64::new(0),
        commits: AtomicU64::new(0),
        start: Instant::now(),
    };
    let results: Vec<std::thread::Result<Result<Vec<TraceRecord>>>> = std::thread::scope(|s| {
        let mut handles = Vec::with_capacity(config.cores());
        for c in 0..config.cores() {
            let shared = &shared;
            let h = std::thread::Builder::new()
                .name(format!("worker-{c}"))
                .spawn_scoped(s, move || worker(shared, c));
            match h {
                Ok(h) => handles.push(h),
                Err(e) => return Err(Error::Runtime(format!("cannot spawn worker {c}: {e}"))),
            }
        }
        Ok(handles.into_iter().map(|h| h.join()).collect())
    })?;
    let mut records = Vec::with_capacity(opts.budget as usize);
    for (c, r) in results.into_iter().enumerate() {
        match r {
            Ok(Ok(recs)) => records.extend(recs),
            Ok(Err(e)) => return Err(e),
            Err(_) => return Err(Error::Runtime(format!("worker {c} panicked; partial trace discarded"))),
        }
    }
    records.sort_by_key(|r| r.k);
    let wall = shared.start.elapsed().as_secs_f64();
    Ok(Trace {
        x0,
        cell: CellKind::Fixed,
        momentum: opts.momentum,
        staleness: config.staleness,
        records,
        final_x: shared.vector.snapshot(),
        wall_elapsed_s: Some(wall),
    })
}

/// Replay every logged increment in commit order from `x0` in the trace's
/// cell arithmetic; true iff the result equals the final vector exactly.
pub fn serial_replay_check(trace: &Trace, x0: &[f64]) -> Result<bool> {
    trace.check_complete()?;
    check_dim(trace.dim(), x0.len())?;
    if trace.records.iter().enumerate().any(|(i, r)| r.k != i as u64) {
        return Err(Error::Audit("commit counters are not contiguous from 0".into()));
    }
    let mut x = x0.to_vec();
    for r in &trace.records {
        for (&j, &d) in r.components.iter().zip(&r.delta) {
            x[j] = trace.cell.add(x[j], d).1;
        }
    }
    Ok(x.iter().zip(&trace.final_x).all(|(a, b)| a.to_bits() == b.to_bits()))
}

/// Per component: exact integer sum of applied increments minus
/// `final − initial`, in cell units. All zero means conservation holds.
pub fn conservation_residuals(trace: &Trace) -> Vec<i64> {
    let mut sums = vec![0i64; trace.dim()];
    for r in &trace.records {
        for (&j, &d) in r.components.iter().zip(&r.delta) {
            sums[j] += to_fixed(d);
        }
    }
    sums.iter()
        .enumerate()
        .map(|(j, s)| s - (to_fixed(trace.final_x[j]) - to_fixed(trace.x0[j])))
        .collect()
}

/// Realized staleness of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayReport {
    /// `histogram[d]`: number of (record, component) reads with delay `d`.
    pub histogram: Vec<u64>,
    pub max_delay: u32,
    pub declared: u32,
    /// Exceeded the declared bound.
    pub exceeds_declared: bool,
    /// Mean time between commits per written component set: wall seconds
    /// when recorded, else virtual time.
    pub mean_interval: Vec<(Vec<usize>, f64)>,
}

pub fn measure_delays(trace: &Trace, declared: u32) -> Result<DelayReport> {
    if trace.is_empty() {
        return Err(Error::Input("trace is empty".into()));
    }
    let max_delay = trace.max_delay();
    let mut histogram = vec![0u64; max_delay as usize + 1];
    for r in &trace.records {
        for &d in &r.delays {
            histogram[d as usize] += 1;
        }
    }
    let mut per_block: BTreeMap<Vec<usize>, (f64, u64)> = BTreeMap::new();
    for r in &trace.records {
        let dt = r.wall.map_or(r.dtau, |w| w.elapsed_s);
        let e = per_block.entry(r.components.clone()).or_insert((0.0, 0));
        e.0 += dt;
        e.1 += 1;
    }
    Ok(DelayReport {
        histogram,
        max_delay,
        declared,
        exceeds_declared: max_delay > declared,
        mean_interval: per_block.into_iter().map(|(b, (s, c))| (b, s / c as f64)).collect(),
    })
}

/// Lock intervals of full-vector commits overlap nowhere.
pub fn lock_intervals_disjoint(trace: &Trace) -> bool {
    let mut spans: Vec<(u64, u64)> = trace
        .records
        .iter()
        .filter_map(|r| r.wall.and_then(|w| Some((w.lock_acquired_ns?, w.lock_released_ns?))))
        .collect();
    spans.sort_unstable();
    spans.windows(2).all(|w| w[0].1 <= w[1].0)
}
