//! The optimizer: step-size schedules, momentum updates, single steps under
//! a scheduled event, seeded simulated runs, and the interleaved mode plan.

mod plan;
mod schedule;

pub use plan::{passm_plus_plan, Mode, ModePlan};
pub use schedule::{discretize_gamma, validate_schedule, ScheduleReport, StepSchedule};

use crate::cell::CellKind;
use crate::error::{check_dim, Error, Result};
use crate::oracle::{BlockPartition, Problem};
use crate::sched::{AsyncConfig, Event, EventGenerator, HistoryRing};
use crate::trace::{Trace, TraceRecord};

/// `m·u + g`.
pub fn momentum_update(u: &[f64], g: &[f64], m: f64) -> Result<Vec<f64>> {
    check_dim(u.len(), g.len())?;
    Ok(u.iter().zip(g).map(|(ui, gi)| m * ui + gi).collect())
}

/// The increment `−(1−m)·γ·u` of one component.
pub fn step_delta(u: f64, gamma: f64, m: f64) -> f64 {
    -((1.0 - m) * gamma * u)
}

/// `x − (1−m)·γ·u`.
pub fn apply_step(x: &[f64], u: &[f64], gamma: f64, m: f64) -> Result<Vec<f64>> {
    check_dim(x.len(), u.len())?;
    Ok(x.iter().zip(u).map(|(xi, ui)| xi + step_delta(*ui, gamma, m)).collect())
}

fn check_momentum(m: f64) -> Result<()> {
    if (0.0..1.0).contains(&m) {
        Ok(())
    } else {
        Err(Error::Config(format!("momentum {m} must lie in [0, 1)")))
    }
}

/// Shared iterate history plus each core's private state.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    ring: HistoryRing,
    /// Per-core momentum buffers over the full vector; a core only touches
    /// the components it updates.
    momentum_buffers: Vec<Vec<f64>>,
    momentum: f64,
    /// `ν(c, k)`.
    counters: Vec<u64>,
    /// Per-core virtual clocks: sum of the core's elapsed times so far.
    clocks: Vec<f64>,
    cell: CellKind,
}

impl OptimizerState {
    pub fn new(x0: &[f64], cores: usize, staleness: u32, momentum: f64, cell: CellKind) -> Result<Self> {
        check_momentum(momentum)?;
        if cores == 0 {
            return Err(Error::Config("need at least one core".into()));
        }
        let x0: Vec<f64> = x0.iter().map(|&v| cell.quantize(v)).collect();
        Ok(Self {
            ring: HistoryRing::new(&x0, staleness),
            momentum_buffers: vec![vec![0.0; x0.len()]; cores],
            momentum,
            counters: vec![0; cores],
            clocks: vec![0.0; cores],
            cell,
        })
    }

    pub fn ring(&self) -> &HistoryRing {
        &self.ring
    }

    pub fn counters(&self) -> &[u64] {
        &self.counters
    }

    pub fn momentum_buffer(&self, core: usize) -> &[f64] {
        &self.momentum_buffers[core]
    }

    pub fn current(&self) -> Vec<f64> {
        self.ring.current()
    }

    /// One update: read the stale view, estimate the block subgradient,
    /// fold it into the core's momentum, and commit the step to the
    /// current shared values. The step size averages `γ` over the core's
    /// own clock interval, scaled by `multiplier`.
    pub fn step(
        &mut self,
        event: &Event,
        mode: Mode,
        multiplier: f64,
        partition: &BlockPartition,
        problem: &Problem,
        schedule: &StepSchedule,
    ) -> Result<TraceRecord> {
        let c = event.core;
        if c >= self.counters.len() {
            return Err(Error::Input(format!("event core {c} out of range")));
        }
        if !partition.core_blocks(c).contains(&event.block) {
            return Err(Error::ModelViolation(format!(
                "core {c} selected block {} outside its assignment",
                event.block
            )));
        }
        let components: Vec<usize> = match mode {
            Mode::Assm => (0..self.ring.dim()).collect(),
            Mode::Passm => partition.block(event.block).to_vec(),
        };
        let view = self.ring.stale_view(&event.delays)?;
        let (y, flops) = problem.block_subgrad(&view, &event.batch, &components)?;
        let gamma = discretize_gamma(schedule, self.clocks[c], event.dtau) * multiplier;
        let m = self.momentum;
        let buf = &mut self.momentum_buffers[c];
        let mut delta = Vec::with_capacity(components.len());
        let mut values = Vec::with_capacity(components.len());
        for (&j, &yj) in components.iter().zip(&y) {
            buf[j] = m * buf[j] + yj;
            let (d, v) = self.cell.add(self.ring.current_component(j), step_delta(buf[j], gamma, m));
            delta.push(d);
            values.push(v);
        }
        self.ring.record_commit(&components, &values)?;
        self.clocks[c] += event.dtau;
        let record = TraceRecord {
            k: event.k,
            core: c,
            mode,
            components,
            time: self.clocks[c],
            dtau: event.dtau,
            local_step: self.counters[c],
            gamma,
            delays: event.delays.clone(),
            batch: event.batch.clone(),
            y,
            delta,
            values,
            flops,
            view: None,
            wall: None,
        };
        self.counters[c] += 1;
        Ok(record)
    }
}

/// Run parameters other than the asynchrony model.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub momentum: f64,
    pub budget: u64,
    /// Starting point; the problem's default when `None`.
    pub x0: Option<Vec<f64>>,
    pub cell: CellKind,
}

impl RunOptions {
    pub fn new(momentum: f64, budget: u64) -> Self {
        Self {
            momentum,
            budget,
            x0: None,
            cell: CellKind::Float,
        }
    }
}

fn start_point(problem: &Problem, opts: &RunOptions) -> Result<Vec<f64>> {
    let x0 = opts.x0.clone().unwrap_or_else(|| problem.default_x0());
    check_dim(problem.dim(), x0.len())?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("starting point must be finite".into()));
    }
    Ok(x0)
}

/// Seeded simulated run: events from the generator, one [`OptimizerState`]
/// step each. In an interleaved plan the partitioned epochs use the
/// config's partition and the full-vector epochs ignore the drawn block.
pub fn run(
    config: &AsyncConfig,
    problem: &Problem,
    schedule: &StepSchedule,
    plan: &ModePlan,
    opts: &RunOptions,
) -> Result<Trace> {
    schedule.check()?;
    if config.partition.dim() != problem.dim() {
        return Err(Error::Config(format!(
            "partition covers {} components, problem has {}",
            config.partition.dim(),
            problem.dim()
        )));
    }
    let x0 = start_point(problem, opts)?;
    let mut state = OptimizerState::new(&x0, config.cores(), config.staleness, opts.momentum, opts.cell)?;
    let mut gen = EventGenerator::new(config.clone(), problem.num_samples())?;
    let mut records = Vec::with_capacity(opts.budget as usize);
    for _ in 0..opts.budget {
        let ev = gen.next_event();
        let mode = plan.mode_at(ev.k, opts.budget);
        let mult = plan.multiplier_at(ev.k, opts.budget);
        records.push(state.step(&ev, mode, mult, &config.partition, problem, schedule)?);
    }
    Ok(Trace {
        x0: x0.iter().map(|&v| opts.cell.quantize(v)).collect(),
        cell: opts.cell,
        momentum: opts.momentum,
        staleness: config.staleness,
        records,
        final_x: state.current(),
        wall_elapsed_s: None,
    })
}

/// Plain single-process stochastic subgradient descent with heavy-ball
/// momentum, drawing minibatches and elapsed times from a one-core,
/// zero-staleness version of `config`.
pub fn run_sequential(
    config: &AsyncConfig,
    problem: &Problem,
    schedule: &StepSchedule,
    opts: &RunOptions,
) -> Result<Trace> {
    schedule.check()?;
    check_momentum(opts.momentum)?;
    let mut single = config.clone();
    single.partition = BlockPartition::shared(problem.dim(), 1)?;
    single.staleness = 0;
    single.p_min = 1.0;
    single.core_dtau = Vec::new();
    single.inject_delay_violation_at = None;
    let x0: Vec<f64> = start_point(problem, opts)?
        .into_iter()
        .map(|v| opts.cell.quantize(v))
        .collect();
    let mut gen = EventGenerator::new(single, problem.num_samples())?;
    let n = problem.dim();
    let m = opts.momentum;
    let mut x = x0.clone();
    let mut u = vec![0.0; n];
    let mut clock = 0.0;
    let all: Vec<usize> = (0..n).collect();
    let mut records = Vec::with_capacity(opts.budget as usize);
    for k in 0..opts.budget {
        let ev = gen.next_event();
        let (g, flops) = problem.block_subgrad(&x, &ev.batch, &all)?;
        let gamma = discretize_gamma(schedule, clock, ev.dtau);
        clock += ev.dtau;
        let mut delta = Vec::with_capacity(n);
        for j in 0..n {
            u[j] = m * u[j] + g[j];
            let (d, v) = opts.cell.add(x[j], step_delta(u[j], gamma, m));
            x[j] = v;
            delta.push(d);
        }
        records.push(TraceRecord {
            k,
            core: 0,
            mode: Mode::Assm,
            components: all.clone(),
            time: clock,
            dtau: ev.dtau,
            local_step: k,
            gamma,
            delays: vec![0; n],
            batch: ev.batch,
            y: g,
            delta,
            values: x.clone(),
            flops,
            view: None,
            wall: None,
        });
    }
    Ok(Trace {
        x0,
        cell: opts.cell,
        momentum: m,
        staleness: 0,
        records,
        final_x: x,
        wall_elapsed_s: None,
    })
}
