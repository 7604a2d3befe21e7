//! Browser bindings. Each export takes plain numbers and returns a JSON
//! string, so the page needs no bundler or generated typings.

use passm::engine::{passm_plus_plan, run, validate_schedule, Mode, ModePlan, RunOptions, StepSchedule};
use passm::oracle::{BlockPartition, Dc2d, GapMethod, Problem};
use passm::sched::{AsyncConfig, DtauModel};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Most path points sent to the page per trajectory.
const MAX_PATH_POINTS: usize = 1500;
/// Side of the objective heat-map grid.
const GRID: usize = 96;
/// Viewport `[lo, hi]` on both axes.
pub const VIEW: (f64, f64) = (-2.0, 2.0);

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub path: Vec<[f64; 2]>,
    pub final_x: [f64; 2],
    pub loss: f64,
    pub gap: f64,
    pub block_gaps: [f64; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct Dc2dDemo {
    pub full: Trajectory,
    pub partitioned: Trajectory,
    pub view: [f64; 2],
    pub grid: usize,
    /// Row-major objective values, row 0 at the bottom of the view.
    pub heat: Vec<f64>,
}

fn trajectory(problem: &Problem, config: &AsyncConfig, schedule: &StepSchedule, mode: Mode, opts: &RunOptions) -> passm::Result<Trajectory> {
    let trace = run(config, problem, schedule, &ModePlan::constant(mode), opts)?;
    let every = trace.len().div_ceil(MAX_PATH_POINTS).max(1);
    let mut path = Vec::with_capacity(MAX_PATH_POINTS + 2);
    trace.for_each_iterate(|k, x| {
        if k % every == 0 || k == trace.len() {
            path.push([x[0], x[1]]);
        }
    });
    let x = &trace.final_x;
    Ok(Trajectory {
        path,
        final_x: [x[0], x[1]],
        loss: problem.eval(x)?,
        gap: problem.clarke_gap(x, GapMethod::Exact)?,
        block_gaps: [
            problem.block_gap(x, &[0], GapMethod::Exact)?,
            problem.block_gap(x, &[1], GapMethod::Exact)?,
        ],
    })
}

/// Full-vector and partitioned runs from the same start on the shipped
/// two-dimensional instance, two simulated cores.
pub fn dc2d_demo(steps: u64, seed: u64, step_scale: f64, start: [f64; 2]) -> passm::Result<Dc2dDemo> {
    let problem: Problem = Dc2d::separating_instance().into();
    let schedule = StepSchedule::PowerDecay {
        a: step_scale,
        b: 1.0,
        alpha: 0.7,
    };
    let mut opts = RunOptions::new(0.0, steps);
    opts.x0 = Some(start.to_vec());
    let mut shared = AsyncConfig::new(BlockPartition::shared(2, 2)?, 2, 1, seed);
    shared.dtau = DtauModel::Exponential { mean: 1.0, cap: 20.0 };
    let mut split = AsyncConfig::new(BlockPartition::contiguous(2, 2)?, 2, 1, seed);
    split.dtau = shared.dtau;
    let (lo, hi) = VIEW;
    let cell = (hi - lo) / GRID as f64;
    let mut heat = Vec::with_capacity(GRID * GRID);
    for r in 0..GRID {
        for c in 0..GRID {
            let x = [lo + (c as f64 + 0.5) * cell, lo + (r as f64 + 0.5) * cell];
            heat.push(problem.eval(&x)?);
        }
    }
    Ok(Dc2dDemo {
        full: trajectory(&problem, &shared, &schedule, Mode::Assm, &opts)?,
        partitioned: trajectory(&problem, &split, &schedule, Mode::Passm, &opts)?,
        view: [lo, hi],
        grid: GRID,
        heat,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleDemo {
    pub s: Vec<f64>,
    pub gamma: Vec<f64>,
    pub accepted: bool,
    pub divergent_integral: bool,
    pub decays: bool,
    pub slow_variation: Vec<(f64, f64)>,
    pub failures: Vec<String>,
}

/// `a (b + s)^{−α}` sampled on `[0, horizon]` plus the validator's verdict.
pub fn schedule_demo(a: f64, b: f64, alpha: f64, horizon: f64, points: usize) -> passm::Result<ScheduleDemo> {
    let schedule = StepSchedule::PowerDecay { a, b, alpha };
    let report = validate_schedule(&schedule, horizon)?;
    let n = points.clamp(2, 4096);
    let s: Vec<f64> = (0..n).map(|i| horizon * i as f64 / (n - 1) as f64).collect();
    Ok(ScheduleDemo {
        gamma: s.iter().map(|&t| schedule.value(t)).collect(),
        s,
        accepted: report.accepted(),
        divergent_integral: report.divergent_integral,
        decays: report.decays,
        slow_variation: report.slow_variation.clone(),
        failures: report.failures,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanDemo {
    /// `true` for full-vector epochs.
    pub full_vector: Vec<bool>,
    pub switch_epochs: Vec<u32>,
    pub multipliers: Vec<(u32, f64)>,
    pub full_vector_fraction: f64,
}

pub fn plan_demo(total_epochs: u32, dampen_epochs: &[u32], cores: usize) -> passm::Result<PlanDemo> {
    let p = passm_plus_plan(total_epochs, dampen_epochs, cores)?;
    Ok(PlanDemo {
        full_vector: p.modes.iter().map(|&m| m == Mode::Assm).collect(),
        full_vector_fraction: p.assm_fraction(),
        switch_epochs: p.switch_epochs,
        multipliers: p.multipliers,
    })
}

fn to_js<T: Serialize>(r: passm::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = dc2dTrajectories)]
pub fn dc2d_trajectories(steps: u32, seed: u32, step_scale: f64, x1: f64, x2: f64) -> Result<String, JsError> {
    to_js(dc2d_demo(steps as u64, seed as u64, step_scale, [x1, x2]))
}

#[wasm_bindgen(js_name = scheduleCurve)]
pub fn schedule_curve(a: f64, b: f64, alpha: f64, horizon: f64, points: u32) -> Result<String, JsError> {
    to_js(schedule_demo(a, b, alpha, horizon, points as usize))
}

/// Comma-separated epochs; blank entries are skipped.
pub fn parse_epochs(text: &str) -> passm::Result<Vec<u32>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| passm::Error::Input(format!("{s:?} is not an epoch number")))
        })
        .collect()
}

#[wasm_bindgen(js_name = interleavedPlan)]
pub fn interleaved_plan(total_epochs: u32, dampen: &str, cores: u32) -> Result<String, JsError> {
    to_js(parse_epochs(dampen).and_then(|e| plan_demo(total_epochs, &e, cores as usize)))
}
