//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Runs with `cargo test --test acceptance`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use passm::engine::{
    discretize_gamma, passm_plus_plan, run, validate_schedule, Mode, ModePlan, RunOptions, StepSchedule,
};
use passm::interp::{build_interpolation, martingale_diag, time_fraction_in_set, trace_span};
use passm::oracle::{flops_saved, BlockPartition, Dc2d, GapMethod, Median, Problem, ReluMlp};
use passm::sched::{validate_model, AsyncConfig, DtauModel, EventGenerator, DEFAULT_WINDOW};
use passm::shmexec::{conservation_residuals, measure_delays, serial_replay_check, spawn_run, LockMode};
use passm::trace::Trace;

type Outcome = passm::Result<(bool, String)>;

/// 101 well-spread values in [0, 10).
fn median_problem() -> Median {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    Median::new((1..=101).map(|j| 10.0 * (j as f64 * phi).fract()).collect()).unwrap()
}

fn sequential_equivalence() -> Outcome {
    let median = median_problem();
    let problem: Problem = median.clone().into();
    let schedule = StepSchedule::PowerDecay { a: 0.5, b: 1.0, alpha: 0.7 };
    let config = AsyncConfig::new(BlockPartition::shared(1, 1)?, 0, 5, 11);
    let trace = run(&config, &problem, &schedule, &ModePlan::constant(Mode::Assm), &RunOptions::new(0.0, 1000))?;

    // textbook minibatch subgradient descent on the same sample path
    let mut gen = EventGenerator::new(config, median.num_samples())?;
    let mut x = median.default_x0();
    let mut clock = 0.0;
    let mut worst = 0.0_f64;
    for r in &trace.records {
        let ev = gen.next_event();
        let mut g = 0.0;
        for &j in &ev.batch {
            let d = x - median.values()[j];
            g += if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 };
        }
        g /= ev.batch.len() as f64;
        x -= discretize_gamma(&schedule, clock, ev.dtau) * g;
        clock += ev.dtau;
        worst = worst.max((x - r.values[0]).abs());
    }
    Ok((worst == 0.0, format!("max deviation {worst:e} over 1000 steps")))
}

fn momentum_unroll() -> Outcome {
    let mut worst = 0.0_f64;
    for seed in 0..20u64 {
        let problem: Problem = ReluMlp::synthetic(vec![3, 4, 1], 8, seed)?.into();
        let n = problem.dim();
        let m = 0.05 * (seed % 19) as f64;
        let mut config = AsyncConfig::new(BlockPartition::shared(n, 3)?, 3, 2, seed);
        config.dtau = DtauModel::Exponential { mean: 1.0, cap: 10.0 };
        let schedule = StepSchedule::PowerDecay { a: 0.05, b: 1.0, alpha: 0.6 };
        let trace = run(&config, &problem, &schedule, &ModePlan::constant(Mode::Assm), &RunOptions::new(m, 100))?;
        // x_K = x_0 − (1−m) Σ_k γ_k Σ_{j ≤ k, same core} m^{ν_k − ν_j} y_j
        let mut x = trace.x0.clone();
        for (k, r) in trace.records.iter().enumerate() {
            for i in 0..n {
                let u: f64 = trace.records[..=k]
                    .iter()
                    .filter(|q| q.core == r.core)
                    .map(|q| m.powi((r.local_step - q.local_step) as i32) * q.y[i])
                    .sum();
                x[i] -= (1.0 - m) * r.gamma * u;
            }
        }
        let dev = x.iter().zip(&trace.final_x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(dev);
    }
    Ok((worst <= 1e-10, format!("max deviation {worst:e} over 20 traces of 100 steps")))
}

fn unbiasedness() -> Outcome {
    let mlp = ReluMlp::synthetic(vec![2, 3, 1], 6, 5)?;
    let problem: Problem = mlp.clone().into();
    let n = problem.dim();
    let all: Vec<usize> = (0..n).collect();
    let mut worst = 0.0_f64;
    let mut points = 0;
    let mut state = 0x2545_f491_4f6c_dd1d_u64;
    while points < 100 {
        let x: Vec<f64> = (0..n)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            })
            .collect();
        if !problem.kink_samples(&x)?.is_empty() {
            continue;
        }
        points += 1;
        let full = problem.minibatch_subgrad(&x, &(0..6).collect::<Vec<_>>())?;
        let mut mean = vec![0.0; n];
        let mut count = 0;
        for a in 0..6 {
            for b in a + 1..6 {
                let (g, _) = problem.block_subgrad(&x, &[a, b], &all)?;
                mean.iter_mut().zip(&g).for_each(|(m, v)| *m += v);
                count += 1;
            }
        }
        for (m, f) in mean.iter().zip(&full) {
            worst = worst.max((m / count as f64 - f).abs());
        }
    }
    Ok((worst <= 1e-12, format!("max deviation {worst:e} at 100 points, 15 minibatches each")))
}

fn convergence_run() -> passm::Result<(Median, Trace)> {
    let median = median_problem();
    let problem: Problem = median.clone().into();
    let mut config = AsyncConfig::new(BlockPartition::shared(1, 4)?, 5, CONVERGENCE_BATCH, 7);
    config.dtau = DtauModel::Exponential { mean: 1.0, cap: 20.0 };
    let schedule = StepSchedule::PowerDecay { a: 0.5, b: 1.0, alpha: 0.7 };
    let trace = run(&config, &problem, &schedule, &ModePlan::constant(Mode::Assm), &RunOptions::new(0.9, 100_000))?;
    Ok((median, trace))
}

const CONVERGENCE_BATCH: usize = 10;

fn convergence() -> Outcome {
    let (median, trace) = convergence_run()?;
    let x = trace.final_x[0];
    let err = (x - median.median()).abs();
    // the gap's radius is set to the iterate tolerance
    let problem: Problem = median.into();
    let gap = problem.with_gap_radius(1e-2).clarke_gap(&trace.final_x, GapMethod::Exact)?;
    Ok((
        err < 1e-2 && gap == 0.0,
        format!("|x − median| = {err:.3e}, terminal gap {gap:e} (radius 1e-2), 1e5 iterations"),
    ))
}

fn separation() -> Outcome {
    let problem: Problem = Dc2d::separating_instance().into();
    let schedule = StepSchedule::PowerDecay { a: 0.05, b: 1.0, alpha: 0.7 };
    let start = vec![-1.0, -1.5];
    let mut opts = RunOptions::new(0.0, 20_000);
    opts.x0 = Some(start);
    let finals = |partition: BlockPartition, mode: Mode| -> passm::Result<Vec<f64>> {
        let mut config = AsyncConfig::new(partition, 2, 1, 0);
        config.dtau = DtauModel::Exponential { mean: 1.0, cap: 20.0 };
        Ok(run(&config, &problem, &schedule, &ModePlan::constant(mode), &opts)?.final_x)
    };
    let xp = finals(BlockPartition::contiguous(2, 2)?, Mode::Passm)?;
    let xa = finals(BlockPartition::shared(2, 2)?, Mode::Assm)?;
    let block = problem.block_gap(&xp, &[0], GapMethod::Exact)?.max(problem.block_gap(&xp, &[1], GapMethod::Exact)?);
    let full_p = problem.clarke_gap(&xp, GapMethod::Exact)?;
    let full_a = problem.clarke_gap(&xa, GapMethod::Exact)?;
    Ok((
        block < 1e-3 && full_p > 0.1 && full_a < 1e-2,
        format!(
            "partitioned ends at ({:.3}, {:.3}) with block gap {block:.1e}, full gap {full_p:.3}; full-vector ends at ({:.3}, {:.3}) with full gap {full_a:.1e}",
            xp[0], xp[1], xa[0], xa[1]
        ),
    ))
}

fn model_validation() -> Outcome {
    let partition = BlockPartition::deal(8, (0..8).map(|j| vec![j]).collect(), 4)?;
    let mut config = AsyncConfig::new(partition, 5, 3, 2024);
    config.dtau = DtauModel::Exponential { mean: 1.0, cap: 20.0 };
    let events = EventGenerator::new(config.clone(), 50)?.take(100_000);
    let again = EventGenerator::new(config.clone(), 50)?.take(100_000);
    let over = events.iter().flat_map(|e| &e.delays).filter(|&&d| d > config.staleness).count();
    let report = validate_model(&events, &config, DEFAULT_WINDOW)?;
    let worst = report
        .frequencies
        .iter()
        .map(|f| f.frequency - (config.p_min - 3.0 * (config.p_min * (1.0 - config.p_min) / f.trials as f64).sqrt()))
        .fold(f64::INFINITY, f64::min);
    let identical = events == again;
    Ok((
        over == 0 && worst >= 0.0 && identical && !report.has_hard_flag(),
        format!("{over} delays above bound, min frequency margin {worst:.4}, repeat identical: {identical}"),
    ))
}

fn schedule_table() -> Outcome {
    let horizon = 1e4;
    let accepts = [0.6, 1.0].iter().all(|&alpha| {
        validate_schedule(&StepSchedule::PowerDecay { a: 0.1, b: 1.0, alpha }, horizon).is_ok_and(|r| r.accepted())
    });
    let summable = validate_schedule(&StepSchedule::PowerDecay { a: 0.1, b: 1.0, alpha: 2.0 }, horizon)?;
    let flat = validate_schedule(&StepSchedule::Constant { value: 0.1 }, horizon)?;
    let g = discretize_gamma(&StepSchedule::PowerDecay { a: 1.0, b: 1.0, alpha: 1.0 }, 0.0, 1.0);
    let ln2 = (g - std::f64::consts::LN_2).abs();
    Ok((
        accepts && !summable.divergent_integral && !summable.accepted() && !flat.decays && !flat.accepted() && ln2 <= 1e-10,
        format!(
            "accepts α∈{{0.6, 1.0}}: {accepts}; α=2 rejected for {:?}; constant rejected for {:?}; |γ̄ − ln 2| = {ln2:e}",
            summable.failures, flat.failures
        ),
    ))
}

fn executor_conservation() -> Outcome {
    let mlp = ReluMlp::synthetic(vec![4, 6, 6, 1], 32, 3)?;
    let problem: Problem = mlp.into();
    let n = problem.dim();
    let schedule = StepSchedule::PowerDecay { a: 0.05, b: 1.0, alpha: 0.6 };
    let config = AsyncConfig::new(BlockPartition::contiguous(n, 4)?, 8, 4, 9);
    let opts = RunOptions::new(0.9, 10_000);
    let trace = spawn_run(&config, &problem, &schedule, &ModePlan::constant(Mode::Passm), &opts, LockMode::WriteOnly)?;
    let residual = conservation_residuals(&trace).iter().map(|r| r.abs()).max().unwrap_or(0);
    let replay = serial_replay_check(&trace, &trace.x0)?;
    let shared = AsyncConfig::new(BlockPartition::shared(n, 4)?, 8, 4, 9);
    let strict = spawn_run(&shared, &problem, &schedule, &ModePlan::constant(Mode::Assm), &RunOptions::new(0.9, 2_000), LockMode::Strict)?;
    let strict_max = measure_delays(&strict, 0)?.max_delay;
    let observed = measure_delays(&trace, config.staleness)?.max_delay;
    Ok((
        residual == 0 && replay && strict_max == 0,
        format!(
            "4 threads, 1e4 commits: max residual {residual} cell units, replay {replay}, observed staleness {observed}; strict full-vector staleness {strict_max}"
        ),
    ))
}

fn interpolation_identities() -> Outcome {
    let mut checked = 0usize;
    let mut broken = 0usize;
    for seed in 0..5u64 {
        let problem: Problem = ReluMlp::synthetic(vec![2, 3, 1], 10, seed)?.into();
        let n = problem.dim();
        let mut config = AsyncConfig::new(BlockPartition::contiguous(n, 2)?, 2, 2, seed);
        config.dtau = DtauModel::Exponential { mean: 1.0 + seed as f64, cap: 30.0 };
        let schedule = StepSchedule::PowerDecay { a: 0.1, b: 1.0, alpha: 0.6 };
        let trace = run(&config, &problem, &schedule, &ModePlan::constant(Mode::Passm), &RunOptions::new(0.5, 2_000))?;
        let blocks = config.partition.blocks().to_vec();
        let span = trace_span(&trace);
        for i in 0..10 {
            let ip = build_interpolation(&trace, &blocks, span * i as f64 / 10.0)?;
            for b in &ip.blocks {
                for k in 0..b.len() {
                    checked += 1;
                    if b.n(b.tau(b.step_clock[k])) != b.step_clock[k] {
                        broken += 1;
                    }
                }
            }
        }
    }
    let (median, trace) = convergence_run()?;
    let problem: Problem = median.into();
    let span = trace_span(&trace);
    let eps = [0.0, 0.01, 0.05, 0.1, 0.5, f64::INFINITY];
    let fr = time_fraction_in_set(&trace, &problem, &eps, 0.2 * span, span)?;
    let monotone = fr.windows(2).all(|w| w[0] <= w[1]);
    Ok((
        broken == 0 && monotone && fr[2] >= 0.9,
        format!("clock identity broken at {broken} of {checked} grid points; fractions {fr:?}; monotone {monotone}"),
    ))
}

fn interleaved_plan() -> Outcome {
    let plan = passm_plus_plan(300, &[150, 225], 4)?;
    let expected = [75, 135, 165, 210, 225];
    let switches_ok = plan.switch_epochs == expected;
    let mult_ok = !plan.multipliers.is_empty() && plan.multipliers.iter().all(|&(_, f)| f == 0.75);
    let frac = plan.assm_fraction();
    let frac_ok = (0.45..=0.55).contains(&frac);
    let table = ModePlan::from_switch_epochs(300, &expected, 4)?;
    Ok((
        switches_ok && mult_ok && frac_ok,
        format!(
            "switches {:?} (expected {expected:?}), multipliers {:?}, full-vector fraction {frac}; the expected switches alone give fraction {}",
            plan.switch_epochs,
            plan.multipliers,
            table.assm_fraction()
        ),
    ))
}

fn flop_accounting() -> Outcome {
    let mlp = ReluMlp::synthetic(vec![4, 4, 4, 4, 4], 3, 1)?;
    let layers = mlp.layer_blocks();
    let full = mlp.reverse_flops();
    let problem: Problem = mlp.into();
    let x = problem.default_x0();
    let all: Vec<usize> = (0..problem.dim()).collect();
    let (_, measured_full) = problem.block_subgrad(&x, &[0], &all)?;
    let mut saved = 0;
    for layer in &layers {
        let (_, f) = problem.block_subgrad(&x, &[0], layer)?;
        saved += measured_full - f;
    }
    let expected = flops_saved(full, layers.len() as u64)?.total;
    Ok((
        saved == expected && measured_full == full,
        format!("{} layer groups, F = {full}: measured saving {saved}, F(c−1)/2 = {expected}", layers.len()),
    ))
}

fn martingale() -> Outcome {
    let problem: Problem = Median::new(vec![0.3, 1.7, 2.2, 4.0, 5.5, 9.1])?.into();
    let schedule = StepSchedule::PowerDecay { a: 0.5, b: 1.0, alpha: 0.7 };
    let full_cfg = AsyncConfig::new(BlockPartition::shared(1, 2)?, 2, 6, 1);
    let full = run(&full_cfg, &problem, &schedule, &ModePlan::constant(Mode::Assm), &RunOptions::new(0.5, 2_000))?;
    let zero = martingale_diag(&full, &problem)?.curve.iter().all(|(_, v)| v.iter().all(|&d| d == 0.0));
    let cfg = AsyncConfig::new(BlockPartition::shared(1, 2)?, 2, 2, 1);
    let trace = run(&cfg, &problem, &schedule, &ModePlan::constant(Mode::Assm), &RunOptions::new(0.5, 10_000))?;
    let diag = martingale_diag(&trace, &problem)?;
    let norm = diag.curve.last().map_or(f64::NAN, |(_, v)| v[0]);
    let envelope = 3.0 * problem.grad_bound() / (1e4_f64 * diag.write_sets[0].len() as f64).sqrt();
    Ok((
        zero && norm <= envelope,
        format!("full batch identically zero: {zero}; running-mean norm {norm:.3e} within envelope {envelope:.3e}"),
    ))
}

/// Name, check, and time budget.
type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("sequential-equivalence", sequential_equivalence, Some(Duration::from_secs(1))),
        ("momentum-unroll", momentum_unroll, Some(Duration::from_secs(5))),
        ("unbiasedness", unbiasedness, Some(Duration::from_secs(1))),
        ("convergence", convergence, Some(Duration::from_secs(10))),
        ("stationarity-separation", separation, Some(Duration::from_secs(30))),
        ("model-validation", model_validation, Some(Duration::from_secs(10))),
        ("schedule-table", schedule_table, None),
        ("executor-conservation", executor_conservation, Some(Duration::from_secs(30))),
        ("interpolation-identities", interpolation_identities, None),
        ("interleaved-plan", interleaved_plan, None),
        ("flop-accounting", flop_accounting, None),
        ("noise-diagnostic", martingale, None),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let in_time = budget.is_none_or(|b| elapsed <= b);
        let (pass, detail) = match outcome {
            Ok((ok, detail)) => (ok && in_time, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        let limit = budget.map_or(String::new(), |b| format!(" / {:.0?}", b));
        println!(
            "{} {name}: {detail} [{:.2?}{limit}]",
            if pass { "PASS" } else { "FAIL" },
            elapsed
        );
    }
    println!("{} of 12 criteria passed", 12 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
