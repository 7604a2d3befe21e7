use passm::oracle::{
    flops_saved, flops_saved_main_text, minnorm::min_norm, Affine2, Dc2d, GapMethod, Median, Problem, ReluMlp, SelectionRule,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn abc() -> Problem {
    Median::new(vec![0.0, 1.0, 5.0]).unwrap().into()
}

fn zoo() -> Vec<Problem> {
    vec![
        Median::new(vec![0.3, 1.7, 2.2, 4.0, 5.5, 9.1]).unwrap().into(),
        Dc2d::separating_instance().into(),
        ReluMlp::synthetic(vec![3, 4, 2], 7, 1).unwrap().into(),
    ]
}

fn random_point(problem: &Problem, rng: &mut ChaCha8Rng) -> Vec<f64> {
    problem.bounding_box().iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect()
}

fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[i] += h;
            down[i] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[test]
fn median_eval_example() {
    assert!((abc().eval(&[1.0]).unwrap() - 5.0 / 3.0).abs() < 1e-15);
    let single: Problem = Median::new(vec![2.5]).unwrap().into();
    assert_eq!(single.eval(&[2.5]).unwrap(), 0.0);
    assert!(abc().eval(&[1.0, 2.0]).is_err());
}

/// Forward pass written out separately from the library's layout code.
fn reference_loss(mlp: &ReluMlp, x: &[f64]) -> f64 {
    let w = mlp.widths();
    let mut total = 0.0;
    for s in mlp.data().iter() {
        let mut a = s.input.clone();
        let mut p = 0;
        for l in 0..w.len() - 1 {
            let (din, dout) = (w[l], w[l + 1]);
            let weights = &x[p..p + din * dout];
            let bias = &x[p + din * dout..p + din * dout + dout];
            p += din * dout + dout;
            let mut z = bias.to_vec();
            for (o, zo) in z.iter_mut().enumerate() {
                for i in 0..din {
                    *zo += weights[o * din + i] * a[i];
                }
            }
            a = if l + 2 < w.len() { z.iter().map(|v| v.max(0.0)).collect() } else { z };
        }
        total += 0.5 * a.iter().zip(&s.target).map(|(z, y)| (z - y).powi(2)).sum::<f64>();
    }
    total / mlp.num_samples() as f64
}

#[test]
fn mlp_eval_matches_reference_forward_pass() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..5 {
        let mlp = ReluMlp::synthetic(vec![3, 5, 4, 2], 9, seed).unwrap();
        let problem: Problem = mlp.clone().into();
        let x = random_point(&problem, &mut rng);
        assert!((problem.eval(&x).unwrap() - reference_loss(&mlp, &x)).abs() < 1e-12);
    }
}

#[test]
fn minibatch_examples() {
    let g = abc().minibatch_subgrad(&[2.0], &[0, 1, 2]).unwrap();
    assert!((g[0] - 1.0 / 3.0).abs() < 1e-15);
    assert!(abc().minibatch_subgrad(&[2.0], &[]).is_err());
    for problem in zoo() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_point(&problem, &mut rng);
        for j in 0..problem.num_samples() {
            assert_eq!(problem.minibatch_subgrad(&x, &[j]).unwrap(), problem.sample_subgrad(&x, j).unwrap());
        }
    }
}

#[test]
fn full_batch_matches_finite_differences() {
    let mlp = ReluMlp::synthetic(vec![2, 3, 1], 5, 4).unwrap();
    let problem: Problem = mlp.into();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let all: Vec<usize> = (0..problem.num_samples()).collect();
    let mut checked = 0;
    while checked < 20 {
        let x = random_point(&problem, &mut rng);
        if !problem.kink_samples(&x).unwrap().is_empty() {
            continue;
        }
        let g = problem.minibatch_subgrad(&x, &all).unwrap();
        let fd = central_difference(|y| problem.eval(y).unwrap(), &x, 1e-6);
        for (a, b) in g.iter().zip(&fd) {
            // a 1e-6 central difference carries about 2e-10 of rounding error at this scale
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        checked += 1;
    }
}

#[test]
fn sample_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for problem in zoo() {
        let mut checked = 0;
        while checked < 100 {
            let x = random_point(&problem, &mut rng);
            if !problem.kink_samples(&x).unwrap().is_empty() {
                continue;
            }
            let j = rng.gen_range(0..problem.num_samples());
            let g = problem.sample_subgrad(&x, j).unwrap();
            let fj = |y: &[f64]| sample_value(&problem, y, j);
            let fd = central_difference(|y| fj(y).unwrap(), &x, 1e-6);
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-5 * a.abs().max(b.abs()).max(1.0), "{} {a} vs {b}", problem.id());
            }
            checked += 1;
        }
    }
}

/// `f_j(y)`: the objective of the one-sample problem.
fn sample_value(problem: &Problem, y: &[f64], j: usize) -> passm::Result<f64> {
    Ok(match problem {
        Problem::Median(p) => (y[0] - p.values()[j]).abs(),
        Problem::Dc2d(p) => p.eval_sample([y[0], y[1]], j),
        Problem::ReluMlp(p) => p.sample_loss(y, j),
    })
}

#[test]
fn subgradients_respect_declared_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for problem in zoo() {
        let bound = problem.grad_bound();
        let b = problem.num_samples().min(3);
        for _ in 0..10_000 {
            let x = random_point(&problem, &mut rng);
            let batch = rand::seq::index::sample(&mut rng, problem.num_samples(), b).into_vec();
            let g = problem.minibatch_subgrad(&x, &batch).unwrap();
            assert!(norm(&g) <= bound, "{} {} > {bound}", problem.id(), norm(&g));
        }
    }
}

#[test]
fn block_restriction_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for problem in zoo() {
        let x = random_point(&problem, &mut rng);
        let batch = vec![0, problem.num_samples() - 1];
        let full = problem.minibatch_subgrad(&x, &batch).unwrap();
        let all: Vec<usize> = (0..problem.dim()).collect();
        let (whole, full_flops) = problem.block_subgrad(&x, &batch, &all).unwrap();
        assert_eq!(whole, full);
        for block in problem.natural_blocks() {
            let (g, flops) = problem.block_subgrad(&x, &batch, &block).unwrap();
            for (v, &j) in g.iter().zip(&block) {
                assert_eq!(v.to_bits(), full[j].to_bits());
            }
            assert!(flops <= full_flops);
        }
        assert!(problem.block_subgrad(&x, &batch, &[]).is_err());
    }
}

#[test]
fn deepest_layer_pass_is_cheaper_and_exact() {
    let mlp = ReluMlp::synthetic(vec![3, 5, 5, 2], 4, 2).unwrap();
    let f = mlp.reverse_flops();
    let top = mlp.layer_blocks().pop().unwrap();
    let problem: Problem = mlp.into();
    let x = problem.default_x0();
    let all: Vec<usize> = (0..problem.dim()).collect();
    let (full, full_flops) = problem.block_subgrad(&x, &[1, 3], &all).unwrap();
    let (g, flops) = problem.block_subgrad(&x, &[1, 3], &top).unwrap();
    assert_eq!(full_flops, 2 * f);
    assert!(flops < full_flops);
    for (v, &j) in g.iter().zip(&top) {
        assert_eq!(v.to_bits(), full[j].to_bits());
    }
}

#[test]
fn flops_saved_examples() {
    let s = flops_saved(8, 4).unwrap();
    assert_eq!((s.per_process, s.total), (vec![0, 2, 4, 6], 12));
    assert_eq!(flops_saved(5, 1).unwrap().total, 0);
    let s = flops_saved(12, 3).unwrap();
    assert_eq!((s.per_process, s.total), (vec![0, 4, 8], 12));
    assert_eq!(flops_saved_main_text(12, 3), 8.0);
}

#[test]
fn layered_savings_equal_closed_form() {
    let mlp = ReluMlp::synthetic(vec![6, 6, 6, 6, 6], 2, 9).unwrap();
    let f = mlp.reverse_flops();
    let blocks = mlp.layer_blocks();
    let problem: Problem = mlp.into();
    let x = problem.default_x0();
    let all: Vec<usize> = (0..problem.dim()).collect();
    let (_, full) = problem.block_subgrad(&x, &[0], &all).unwrap();
    let per: Vec<u64> = blocks.iter().map(|b| full - problem.block_subgrad(&x, &[0], b).unwrap().1).collect();
    let expected = flops_saved(f, 4).unwrap();
    assert_eq!(per, expected.per_process);
    assert_eq!(per.iter().sum::<u64>(), expected.total);
}

#[test]
fn median_gap_examples() {
    assert_eq!(abc().clarke_gap(&[1.0], GapMethod::Exact).unwrap(), 0.0);
    assert!((abc().clarke_gap(&[2.0], GapMethod::Exact).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(abc().clarke_gap(&[2.0], GapMethod::Exact).unwrap(), abc().block_gap(&[2.0], &[0], GapMethod::Exact).unwrap());
    assert_eq!(abc().clarke_gap(&[9.0], GapMethod::Exact).unwrap(), 1.0);
}

#[test]
fn mlp_exact_gap_is_unsupported_but_sampled_works() {
    let problem: Problem = ReluMlp::synthetic(vec![2, 2, 1], 3, 0).unwrap().into();
    let x = problem.default_x0();
    assert!(matches!(problem.clarke_gap(&x, GapMethod::Exact), Err(passm::Error::Unsupported(_))));
    let sampled = problem
        .clarke_gap(&x, GapMethod::Sampled { radius: 1e-6, samples: 8, seed: 1 })
        .unwrap();
    let g = problem.minibatch_subgrad(&x, &[0, 1, 2]).unwrap();
    assert!((sampled - norm(&g)).abs() < 1e-4);
}

#[test]
fn smooth_point_gaps_are_gradient_norms() {
    let problem: Problem = Dc2d::separating_instance().into();
    let x = [-3.3, 0.7];
    assert!(problem.kink_samples(&x).unwrap().is_empty());
    let fd = central_difference(|y| problem.eval(y).unwrap(), &x, 1e-6);
    let gap = problem.clarke_gap(&x, GapMethod::Exact).unwrap();
    assert!((gap - norm(&fd)).abs() < 1e-8);
    for i in 0..2 {
        let b = problem.block_gap(&x, &[i], GapMethod::Exact).unwrap();
        assert!((b - fd[i].abs()).abs() < 1e-8);
    }
}

#[test]
fn shipped_instance_is_blockwise_but_not_fully_stationary() {
    let problem: Problem = Dc2d::separating_instance().into();
    for t in [-3.0, -1.0, 0.0, 0.5] {
        let x = [t, t];
        let blocks = problem.block_gap(&x, &[0], GapMethod::Exact).unwrap().max(problem.block_gap(&x, &[1], GapMethod::Exact).unwrap());
        let full = problem.clarke_gap(&x, GapMethod::Exact).unwrap();
        assert!(blocks < 1e-9 && full > 0.1, "at {t}: {blocks} {full}");
        // independent check: the two active gradients (1, −2) and (−2, 1)
        let hull = min_norm(&[vec![1.0, -2.0], vec![-2.0, 1.0]], 1e-12);
        assert!((full - hull).abs() < 1e-9);
    }
}

/// Small integer DC instances `max(p, q) − max(0, r)` with every piece
/// active at the origin; some must separate the two stationarity notions.
#[test]
fn brute_force_search_finds_separating_instances() {
    let slopes: Vec<[f64; 2]> = (-2..=2).flat_map(|a| (-2..=2).map(move |b| [a as f64, b as f64])).collect();
    let mut found = 0;
    let mut searched = 0;
    for (i, &p) in slopes.iter().enumerate() {
        for &q in &slopes[i + 1..] {
            for &r in slopes.iter().step_by(3) {
                searched += 1;
                let piece = |s: [f64; 2]| Affine2 { slope: s, offset: 0.0 };
                let dc = Dc2d::new(vec![piece(p), piece(q)], vec![piece([0.0, 0.0]), piece(r)], vec![[0.0, 0.0]]).unwrap();
                let problem: Problem = dc.into();
                let x = [0.0, 0.0];
                let full = problem.clarke_gap(&x, GapMethod::Exact).unwrap();
                let block = problem
                    .block_gap(&x, &[0], GapMethod::Exact)
                    .unwrap()
                    .max(problem.block_gap(&x, &[1], GapMethod::Exact).unwrap());
                if block < 1e-9 && full > 0.1 {
                    found += 1;
                }
            }
        }
    }
    assert!(found > 0, "no separating instance among {searched}");
}

#[test]
fn dc_gap_vanishes_exactly_on_stationary_set() {
    let problem: Problem = Dc2d::separating_instance().into();
    assert_eq!(problem.clarke_gap(&[1.0, 1.0], GapMethod::Exact).unwrap(), 0.0);
    // grid avoiding the concave ridge x1 + x2 = 8
    for i in 0..28 {
        for j in 0..28 {
            let x = [-3.0 + 0.25 * i as f64, -3.0 + 0.25 * j as f64];
            let gap = problem.clarke_gap(&x, GapMethod::Exact).unwrap();
            let on = (x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12;
            assert_eq!(gap == 0.0, on, "at {x:?}: {gap}");
        }
    }
}

#[test]
fn median_gap_vanishes_only_at_median() {
    let m = Median::new(vec![0.3, 1.7, 2.2, 4.0, 9.1]).unwrap();
    let problem: Problem = m.clone().into();
    for i in 0..=100 {
        let x = -1.0 + 0.11 * i as f64;
        let gap = problem.clarke_gap(&[x], GapMethod::Exact).unwrap();
        assert!(gap > 0.0, "{x}");
    }
    assert_eq!(problem.clarke_gap(&[m.median()], GapMethod::Exact).unwrap(), 0.0);
}

#[test]
fn selection_rule_controls_kink_values() {
    let rule = SelectionRule { abs_at_kink: 0.5, relu_at_kink: 0.0, average_ties: true };
    let problem = abc().with_selection(rule);
    assert_eq!(problem.sample_subgrad(&[1.0], 1).unwrap(), vec![0.5]);
    assert_eq!(abc().sample_subgrad(&[1.0], 1).unwrap(), vec![0.0]);
    assert_eq!(problem.kink_samples(&[1.0]).unwrap(), vec![1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn minibatch_mean_is_unbiased(seed in 0u64..1000, m in 2usize..=8, b_frac in 0.0f64..1.0) {
        let b = 1 + ((m - 1) as f64 * b_frac) as usize;
        let problem: Problem = ReluMlp::synthetic(vec![2, 3, 1], m, seed).unwrap().into();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_point(&problem, &mut rng);
        prop_assume!(problem.kink_samples(&x).unwrap().is_empty());
        let full = problem.minibatch_subgrad(&x, &(0..m).collect::<Vec<_>>()).unwrap();
        let mut sum = vec![0.0; problem.dim()];
        let mut count = 0u32;
        for mask in 0u32..(1 << m) {
            if mask.count_ones() as usize != b {
                continue;
            }
            let batch: Vec<usize> = (0..m).filter(|j| mask >> j & 1 == 1).collect();
            let g = problem.minibatch_subgrad(&x, &batch).unwrap();
            sum.iter_mut().zip(&g).for_each(|(s, v)| *s += v);
            count += 1;
        }
        for (s, f) in sum.iter().zip(&full) {
            prop_assert!((s / count as f64 - f).abs() < 1e-12);
        }
    }

    #[test]
    fn selection_is_deterministic(x in -20.0f64..20.0, y in -20.0f64..20.0) {
        let problem: Problem = Dc2d::separating_instance().into();
        prop_assert_eq!(problem.sample_subgrad(&[x, y], 0).unwrap(), problem.sample_subgrad(&[x, y], 0).unwrap());
        prop_assert_eq!(problem.clarke_gap(&[x, y], GapMethod::Exact).unwrap(), problem.clarke_gap(&[x, y], GapMethod::Exact).unwrap());
    }
}
