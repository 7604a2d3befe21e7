use passm::engine::{run, Mode, ModePlan, RunOptions, StepSchedule};
use passm::interp::{
    bias_diag, build_interpolation, martingale_diag, mean_update_time, stationarity_curve, time_fraction_in_set,
    trace_span, write_bias_csv, write_martingale_csv, write_stationarity_csv,
};
use passm::oracle::{BlockPartition, Dc2d, Median, Problem, ReluMlp, SelectionRule};
use passm::sched::{AsyncConfig, DtauModel};
use passm::trace::{Trace, TraceRecord};
use proptest::prelude::*;

fn constant_trace(steps: u64) -> Trace {
    let problem: Problem = Median::new(vec![0.0, 1.0, 2.0]).unwrap().into();
    let config = AsyncConfig::new(BlockPartition::shared(1, 1).unwrap(), 0, 1, 0);
    run(&config, &problem, &StepSchedule::Constant { value: 0.1 }, &ModePlan::constant(Mode::Assm), &RunOptions::new(0.0, steps)).unwrap()
}

fn partitioned_trace(seed: u64, steps: u64) -> (Trace, Vec<Vec<usize>>) {
    let problem: Problem = ReluMlp::synthetic(vec![2, 3, 1], 8, seed).unwrap().into();
    let n = problem.dim();
    let mut config = AsyncConfig::new(BlockPartition::contiguous(n, 3).unwrap(), 2, 2, seed);
    config.dtau = DtauModel::Exponential { mean: 1.5, cap: 10.0 };
    let schedule = StepSchedule::PowerDecay { a: 0.1, b: 1.0, alpha: 0.6 };
    let t = run(&config, &problem, &schedule, &ModePlan::constant(Mode::Passm), &RunOptions::new(0.5, steps)).unwrap();
    (t, config.partition.blocks().to_vec())
}

/// 101 well-spread values in [0, 10).
fn median101() -> Median {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    Median::new((1..=101).map(|j| 10.0 * (j as f64 * phi).fract()).collect()).unwrap()
}

fn median_run(budget: u64) -> (Problem, Trace) {
    let median = median101();
    let problem: Problem = median.into();
    let mut config = AsyncConfig::new(BlockPartition::shared(1, 4).unwrap(), 5, 10, 7);
    config.dtau = DtauModel::Exponential { mean: 1.0, cap: 20.0 };
    let schedule = StepSchedule::PowerDecay { a: 0.5, b: 1.0, alpha: 0.7 };
    let t = run(&config, &problem, &schedule, &ModePlan::constant(Mode::Assm), &RunOptions::new(0.9, budget)).unwrap();
    (problem, t)
}

#[test]
fn unit_elapsed_clocks_are_step_multiples() {
    let t = constant_trace(40);
    let b = &build_interpolation(&t, &[vec![0]], 0.0).unwrap().blocks[0];
    for k in 0..=40 {
        assert!((b.step_clock[k] - 0.1 * k as f64).abs() < 1e-12);
        assert_eq!(b.weighted_clock[k], b.step_clock[k]);
    }
}

#[test]
fn clock_identity_holds_on_every_grid_point() {
    for seed in 0..3 {
        let (t, blocks) = partitioned_trace(seed, 1500);
        let span = trace_span(&t);
        for i in 0..10 {
            let ip = build_interpolation(&t, &blocks, span * i as f64 / 10.0).unwrap();
            for b in &ip.blocks {
                for k in 0..b.len() {
                    assert_eq!(b.n(b.tau(b.step_clock[k])), b.step_clock[k]);
                    // right-continuity: the value at a jump is the post-jump value
                    assert_eq!(b.x(b.step_clock[k]), &b.values[k][..]);
                    assert_eq!(b.x_hat(b.weighted_clock[k]), &b.values[k][..]);
                }
            }
        }
    }
}

#[test]
fn mid_trace_shift_starts_at_first_later_update() {
    let (t, blocks) = partitioned_trace(4, 600);
    let span = trace_span(&t);
    let ip = build_interpolation(&t, &blocks, 0.4 * span).unwrap();
    let iterates = t.iterates();
    for b in &ip.blocks {
        // index of the record performing the block's update number `start`
        let k = t
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.components == b.components)
            .nth(b.start)
            .map(|(i, _)| i)
            .unwrap();
        let expected: Vec<f64> = b.components.iter().map(|&j| iterates[k][j]).collect();
        assert_eq!(b.x(0.0), &expected[..]);
        assert!(b.times[0] >= 0.4 * span);
    }
    assert!(build_interpolation(&t, &blocks, 10.0 * span).is_err());
    assert!(build_interpolation(&t, &blocks, -1.0).is_err());
}

#[test]
fn partial_block_writes_are_rejected() {
    let (t, _) = partitioned_trace(1, 50);
    assert!(build_interpolation(&t, &[(0..t.dim()).collect()], 0.0).is_err());
}

#[test]
fn median_gaps_start_at_one_and_end_at_zero() {
    let (problem, t) = median_run(100_000);
    let problem = problem.with_gap_radius(1e-2);
    let curve = stationarity_curve(&t, &problem, &[vec![0]], 10_000).unwrap();
    assert_eq!(curve[0].gap, 1.0);
    let last = curve.last().unwrap();
    assert_eq!(last.k, t.len());
    assert_eq!(last.gap, 0.0);
    assert_eq!(last.block_gaps, vec![0.0]);
    assert!(curve.windows(2).all(|w| w[0].t <= w[1].t));
}

#[test]
fn dc2d_partitioned_terminal_point_is_blockwise_only() {
    let problem: Problem = Dc2d::separating_instance().into();
    let mut config = AsyncConfig::new(BlockPartition::contiguous(2, 2).unwrap(), 2, 1, 0);
    config.dtau = DtauModel::Exponential { mean: 1.0, cap: 20.0 };
    let mut opts = RunOptions::new(0.0, 20_000);
    opts.x0 = Some(vec![-1.0, -1.5]);
    let schedule = StepSchedule::PowerDecay { a: 0.05, b: 1.0, alpha: 0.7 };
    let t = run(&config, &problem, &schedule, &ModePlan::constant(Mode::Passm), &opts).unwrap();
    let curve = stationarity_curve(&t, &problem, &[vec![0], vec![1]], 5000).unwrap();
    let end = curve.last().unwrap();
    assert!(end.block_gaps.iter().all(|&g| g < 1e-3) && end.gap > 0.1, "{end:?}");
}

#[test]
fn time_fractions() {
    let (problem, t) = median_run(100_000);
    let span = trace_span(&t);
    let eps = [0.0, 0.02, 0.05, 0.2, f64::INFINITY];
    let late = time_fraction_in_set(&t, &problem, &eps, 0.2 * span, span).unwrap();
    assert!(late.windows(2).all(|w| w[0] <= w[1]));
    assert!(late[2] >= 0.9);
    assert_eq!(late[4], 1.0);
    // from far away the first 1% of the run is spent travelling
    let mut config = AsyncConfig::new(BlockPartition::shared(1, 4).unwrap(), 5, 10, 7);
    config.dtau = DtauModel::Exponential { mean: 1.0, cap: 20.0 };
    let mut opts = RunOptions::new(0.9, 20_000);
    opts.x0 = Some(vec![200.0]);
    let schedule = StepSchedule::PowerDecay { a: 0.5, b: 1.0, alpha: 0.7 };
    let far = run(&config, &problem, &schedule, &ModePlan::constant(Mode::Assm), &opts).unwrap();
    let early = time_fraction_in_set(&far, &problem, &[0.05], 0.0, 0.01 * trace_span(&far)).unwrap();
    assert!(early[0] < 0.05, "{early:?}");
    assert!(time_fraction_in_set(&t, &problem, &[0.05], 0.0, 2.0 * span).is_err());
}

#[test]
fn full_batch_noise_is_identically_zero() {
    let problem: Problem = Median::new(vec![0.3, 1.7, 2.2, 4.0, 5.5, 9.1]).unwrap().into();
    let config = AsyncConfig::new(BlockPartition::shared(1, 3).unwrap(), 3, 6, 2);
    let schedule = StepSchedule::PowerDecay { a: 0.5, b: 1.0, alpha: 0.7 };
    let t = run(&config, &problem, &schedule, &ModePlan::constant(Mode::Assm), &RunOptions::new(0.5, 3000)).unwrap();
    let d = martingale_diag(&t, &problem).unwrap();
    assert!(d.curve.iter().all(|(_, v)| v.iter().all(|&x| x == 0.0)));
    assert!(d.means.iter().flatten().all(|&x| x == 0.0));
}

#[test]
fn minibatch_noise_mean_stays_in_envelope() {
    let problem: Problem = Dc2d::separating_instance().into();
    // a 6-sample variant of the instance with jittered shifts
    let Problem::Dc2d(base) = &problem else { unreachable!() };
    let shifts = (0..6).map(|j| [0.3 * j as f64 - 0.8, 0.2 - 0.15 * j as f64]).collect();
    let dc: Problem = Dc2d::new(base.top().to_vec(), base.bottom().to_vec(), shifts).unwrap().into();
    let config = AsyncConfig::new(BlockPartition::contiguous(2, 2).unwrap(), 2, 2, 9);
    let schedule = StepSchedule::PowerDecay { a: 0.05, b: 1.0, alpha: 0.7 };
    let t = run(&config, &dc, &schedule, &ModePlan::constant(Mode::Passm), &RunOptions::new(0.5, 10_000)).unwrap();
    let d = martingale_diag(&t, &dc).unwrap();
    let last = &d.curve.last().unwrap().1;
    for (set, norm) in d.write_sets.iter().zip(last) {
        let envelope = 3.0 * dc.grad_bound() / (1e4 * set.len() as f64).sqrt();
        assert!(*norm <= envelope, "{set:?}: {norm} > {envelope}");
    }
    let big: Problem = Median::new((0..13).map(f64::from).collect()).unwrap().into();
    let cfg = AsyncConfig::new(BlockPartition::shared(1, 1).unwrap(), 0, 2, 0);
    let bt = run(&cfg, &big, &schedule, &ModePlan::constant(Mode::Assm), &RunOptions::new(0.0, 10)).unwrap();
    assert!(matches!(martingale_diag(&bt, &big), Err(passm::Error::Unsupported(_))));
}

#[test]
fn negating_the_data_negates_the_noise() {
    let values = vec![0.3, 1.7, 2.2, 4.0, 5.5, 9.1];
    let pos: Problem = Median::new(values.clone()).unwrap().into();
    let neg: Problem = Median::new(values.iter().map(|v| -v).collect()).unwrap().into();
    let config = AsyncConfig::new(BlockPartition::shared(1, 2).unwrap(), 2, 2, 31);
    let schedule = StepSchedule::PowerDecay { a: 0.5, b: 1.0, alpha: 0.7 };
    let plan = ModePlan::constant(Mode::Assm);
    let mut o = RunOptions::new(0.5, 2000);
    o.x0 = Some(vec![3.3]);
    let a = run(&config, &pos, &schedule, &plan, &o).unwrap();
    o.x0 = Some(vec![-3.3]);
    let b = run(&config, &neg, &schedule, &plan, &o).unwrap();
    let (da, db) = (martingale_diag(&a, &pos).unwrap(), martingale_diag(&b, &neg).unwrap());
    assert_eq!(da.means[0][0], -db.means[0][0]);
    assert_eq!(da.curve, db.curve);
}

#[test]
fn bias_is_zero_off_kinks() {
    let (t, _) = partitioned_trace(2, 2000);
    let problem: Problem = ReluMlp::synthetic(vec![2, 3, 1], 8, 2).unwrap().into();
    let d = bias_diag(&t, &problem).unwrap();
    assert_eq!(d.fraction, 0.0);
    assert!(d.beta_mean.iter().all(|&b| b == 0.0));

    let median: Problem = Median::new(vec![0.3, 1.7, 2.2, 4.0, 5.5, 9.1]).unwrap().into();
    let config = AsyncConfig::new(BlockPartition::shared(1, 2).unwrap(), 2, 2, 8);
    let schedule = StepSchedule::PowerDecay { a: 0.5, b: 1.0, alpha: 0.7 };
    let mt = run(&config, &median, &schedule, &ModePlan::constant(Mode::Assm), &RunOptions::new(0.5, 100_000)).unwrap();
    assert_eq!(bias_diag(&mt, &median).unwrap().hits, 0);
}

#[test]
fn pinned_kink_bias_equals_selection_offset() {
    let rule = SelectionRule { abs_at_kink: 0.25, relu_at_kink: 0.0, average_ties: true };
    let problem = Problem::from(Median::new(vec![1.0, 1.0, 1.0, 4.0]).unwrap()).with_selection(rule);
    // zero step size: the iterate never leaves the kink
    let records: Vec<TraceRecord> = (0..50u64)
        .map(|k| {
            let batch = vec![(k % 3) as usize];
            let (y, flops) = problem.block_subgrad(&[1.0], &batch, &[0]).unwrap();
            TraceRecord {
                k,
                core: 0,
                mode: Mode::Assm,
                components: vec![0],
                time: k as f64 + 1.0,
                dtau: 1.0,
                local_step: k,
                gamma: 0.0,
                delays: vec![0],
                batch,
                y,
                delta: vec![0.0],
                values: vec![1.0],
                flops,
                view: None,
                wall: None,
            }
        })
        .collect();
    let t = Trace {
        x0: vec![1.0],
        cell: passm::cell::CellKind::Float,
        momentum: 0.0,
        staleness: 0,
        records,
        final_x: vec![1.0],
        wall_elapsed_s: None,
    };
    let d = bias_diag(&t, &problem).unwrap();
    assert_eq!(d.fraction, 1.0);
    assert_eq!(d.beta_mean, vec![0.25]);
}

#[test]
fn mean_update_time_estimates() {
    let t = constant_trace(200);
    let u = mean_update_time(&t, &[0]).unwrap();
    assert_eq!((u.mean, u.half_width, u.count), (1.0, 0.0, 200));
    assert!(matches!(mean_update_time(&constant_trace(99), &[0]), Err(passm::Error::InsufficientData(_))));

    let problem: Problem = Median::new(vec![1.0, 2.0, 3.0]).unwrap().into();
    let mut config = AsyncConfig::new(BlockPartition::shared(1, 1).unwrap(), 0, 1, 42);
    config.dtau = DtauModel::Exponential { mean: 2.0, cap: 100.0 };
    let schedule = StepSchedule::Constant { value: 0.01 };
    let t = run(&config, &problem, &schedule, &ModePlan::constant(Mode::Assm), &RunOptions::new(0.0, 5000)).unwrap();
    let u = mean_update_time(&t, &[0]).unwrap();
    assert!((u.mean - 2.0).abs() <= u.half_width, "{u:?}");

    let dc: Problem = Dc2d::separating_instance().into();
    let mut two = AsyncConfig::new(BlockPartition::contiguous(2, 2).unwrap(), 1, 1, 42);
    two.core_dtau = vec![DtauModel::Exponential { mean: 1.0, cap: 50.0 }, DtauModel::Exponential { mean: 3.0, cap: 50.0 }];
    let t = run(&two, &dc, &schedule, &ModePlan::constant(Mode::Passm), &RunOptions::new(0.0, 4000)).unwrap();
    let (fast, slow) = (mean_update_time(&t, &[0]).unwrap(), mean_update_time(&t, &[1]).unwrap());
    assert!(fast.mean + fast.half_width < slow.mean - slow.half_width);
}

#[test]
fn csv_exports_are_deterministic() {
    let (problem, t) = median_run(5000);
    let curve = stationarity_curve(&t, &problem, &[vec![0]], 500).unwrap();
    let small: Problem = Median::new(vec![0.3, 1.7, 2.2, 4.0, 5.5, 9.1]).unwrap().into();
    let config = AsyncConfig::new(BlockPartition::shared(1, 2).unwrap(), 1, 2, 3);
    let st = run(&config, &small, &StepSchedule::Constant { value: 0.01 }, &ModePlan::constant(Mode::Assm), &RunOptions::new(0.0, 100)).unwrap();
    let render = || {
        let mut a = Vec::new();
        write_stationarity_csv(&mut a, &curve).unwrap();
        write_martingale_csv(&mut a, &martingale_diag(&st, &small).unwrap()).unwrap();
        write_bias_csv(&mut a, &bias_diag(&st, &small).unwrap()).unwrap();
        String::from_utf8(a).unwrap()
    };
    let text = render();
    assert_eq!(text, render());
    assert!(text.starts_with("k,t,gap,block_gap_0\n0,0,1,1\n"));
    assert!(text.contains("k,dM_mean_0\n") && text.contains("k,kink_frac,beta_norm\n"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shifting_equals_reindexing(seed in 0u64..500, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (t, blocks) = partitioned_trace(seed, 300);
        let span = trace_span(&t);
        let (lo, hi) = (a.min(b) * span, a.max(b) * span);
        let first = build_interpolation(&t, &blocks, lo).unwrap();
        let second = build_interpolation(&t, &blocks, hi).unwrap();
        for (p, q) in first.blocks.iter().zip(&second.blocks) {
            prop_assert_eq!(&p.reindex(q.start - p.start), q);
        }
    }

    #[test]
    fn fraction_is_monotone_in_eps(e1 in 0.0f64..1.0, e2 in 0.0f64..1.0, from in 0.0f64..0.5) {
        let problem: Problem = Median::new(vec![0.3, 1.7, 2.2, 4.0, 5.5, 9.1]).unwrap().into();
        let config = AsyncConfig::new(BlockPartition::shared(1, 2).unwrap(), 1, 2, 3);
        let schedule = StepSchedule::PowerDecay { a: 0.5, b: 1.0, alpha: 0.7 };
        let t = run(&config, &problem, &schedule, &ModePlan::constant(Mode::Assm), &RunOptions::new(0.5, 400)).unwrap();
        let span = trace_span(&t);
        let (lo, hi) = (e1.min(e2), e1.max(e2));
        let f = time_fraction_in_set(&t, &problem, &[lo, hi], from * span, span).unwrap();
        prop_assert!(f[0] <= f[1]);
    }
}
