use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scalar_half_square() -> Problem {
    Problem::isotropic(1, 1.0, 0.0).unwrap()
}

fn four_point_dataset() -> Dataset {
    Dataset::new(
        vec![1.0, 0.5, -0.3, 1.2, 0.8, -1.0, -1.5, -0.2],
        vec![1.0, -1.0, 1.0, -1.0],
        2,
    )
    .unwrap()
}

/// Central difference computed straight from `f`, independent of the
/// analytic gradient code.
fn central_difference(p: &Problem, theta: &[f64], eps: f64) -> Vec<f64> {
    (0..theta.len())
        .map(|i| {
            let mut up = theta.to_vec();
            let mut down = theta.to_vec();
            up[i] += eps;
            down[i] -= eps;
            (p.value(&up).unwrap() - p.value(&down).unwrap()) / (2.0 * eps)
        })
        .collect()
}

#[test]
fn half_square_value_and_grad() {
    let p = scalar_half_square();
    assert_eq!(p.value_and_grad(&[1.0]).unwrap(), (0.5, vec![1.0]));
    assert_eq!(p.value_and_grad(&[0.0]).unwrap(), (0.0, vec![0.0]));
    assert_eq!(p.smoothness(), 1.0);
    assert_eq!(p.minimizer(), Some(&[0.0][..]));
    assert_eq!(p.optimum(), Some(0.0));
}

#[test]
fn logistic_gradient_matches_central_difference() {
    let p = Problem::logistic_from(four_point_dataset(), 0.0).unwrap();
    let theta = [0.0, 0.0];
    let (_, g) = p.value_and_grad(&theta).unwrap();
    let fd = central_difference(&p, &theta, 1e-5);
    for (a, n) in g.iter().zip(&fd) {
        assert!((a - n).abs() <= 1e-6 * a.abs().max(n.abs()), "{a} vs {n}");
    }
}

#[test]
fn zero_noise_quadratic_is_exact() {
    let p = Problem::random_quadratic(5, 0.1, 2.0, 0.0, 3).unwrap();
    let theta = vec![0.3, -1.0, 2.0, 0.0, 0.7];
    let (_, exact) = p.value_and_grad(&theta).unwrap();
    for s in 0..5 {
        let r = p.stochastic_grad(&theta, &MicroBatch::seeded(s, 4)).unwrap();
        assert_eq!(r.gradient, exact);
        assert_eq!(r.sample_count, 4);
    }
}

#[test]
fn noisy_quadratic_is_unbiased_with_matching_variance() {
    let p = Problem::isotropic(1, 1.0, 1.0).unwrap();
    let n = 100_000u64;
    let draws: Vec<f64> = (0..n)
        .map(|s| p.stochastic_grad(&[1.0], &MicroBatch::seeded(crate::seed::derive(&[s]), 1)).unwrap().gradient[0])
        .collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((mean - 1.0).abs() <= 3.0 / (n as f64).sqrt(), "mean {mean}");
    assert!((var - 1.0).abs() <= 0.1, "variance {var}");
}

#[test]
fn per_coordinate_variance_matches_noise_level() {
    let sigma = 0.5;
    let p = Problem::random_quadratic(3, 0.5, 1.0, sigma, 11).unwrap();
    let theta = [0.1, 0.2, 0.3];
    let (_, exact) = p.value_and_grad(&theta).unwrap();
    let n = 100_000u64;
    let mut sum = [0.0; 3];
    let mut sum_sq = [0.0; 3];
    for s in 0..n {
        let g = p.stochastic_grad(&theta, &MicroBatch::seeded(s.wrapping_mul(7919), 1)).unwrap().gradient;
        for i in 0..3 {
            let dev = g[i] - exact[i];
            sum[i] += dev;
            sum_sq[i] += dev * dev;
        }
    }
    for i in 0..3 {
        let mean = sum[i] / n as f64;
        assert!(mean.abs() <= 3.0 * sigma / (n as f64).sqrt());
        let var = sum_sq[i] / n as f64 - mean * mean;
        assert!((var / (sigma * sigma) - 1.0).abs() <= 0.1, "coordinate {i}: {var}");
    }
}

#[test]
fn full_batch_equals_deterministic_gradient() {
    let p = Problem::logistic(40, 3, 1e-3, 5).unwrap();
    let theta = [0.2, -0.4, 1.0];
    let (f, g) = p.value_and_grad(&theta).unwrap();
    let full = p.stochastic_grad(&theta, &MicroBatch::full(40)).unwrap();
    assert_eq!(full.gradient, g);
    assert_eq!(full.loss, f);
    let all = p.stochastic_grad(&theta, &MicroBatch::indices((0..40).collect())).unwrap();
    assert_eq!(all.gradient, g);
    assert_eq!(all.sample_count, 40);
}

#[test]
fn dataset_minibatch_mean_is_unbiased() {
    let p = Problem::logistic(30, 2, 0.0, 9).unwrap();
    let theta = [0.5, -0.5];
    let (_, exact) = p.value_and_grad(&theta).unwrap();
    let n = 20_000u64;
    let mut mean = [0.0; 2];
    for s in 0..n {
        let g = p.stochastic_grad(&theta, &MicroBatch::seeded(s, 1)).unwrap().gradient;
        mean[0] += g[0] / n as f64;
        mean[1] += g[1] / n as f64;
    }
    // per-sample gradients are bounded by the input norms, which are O(3)
    for i in 0..2 {
        assert!((mean[i] - exact[i]).abs() < 0.03, "{mean:?} vs {exact:?}");
    }
}

#[test]
fn stochastic_grad_is_reproducible() {
    let problems = [
        Problem::random_quadratic(4, 0.1, 1.0, 0.7, 1).unwrap(),
        Problem::logistic(25, 4, 1e-3, 2).unwrap(),
    ];
    for p in &problems {
        let theta = vec![0.25; p.dim()];
        let batch = MicroBatch::seeded(1234, 5);
        let a = p.stochastic_grad(&theta, &batch).unwrap();
        let b = p.stochastic_grad(&theta, &batch).unwrap();
        assert_eq!(a, b);
        let c = p.stochastic_grad(&theta, &MicroBatch::seeded(1235, 5)).unwrap();
        assert_ne!(a.gradient, c.gradient);
    }
}

#[test]
fn finite_difference_checks() {
    let q = Problem::random_quadratic(6, 0.1, 3.0, 0.0, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let theta: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
    assert!(finite_diff_check(&q, &theta, 1e-5).unwrap() <= 1e-8);

    let log = Problem::logistic_from(four_point_dataset(), 1e-3).unwrap();
    assert!(finite_diff_check(&log, &[0.0, 0.0], 1e-5).unwrap() <= 1e-6);

    let mlp = Problem::mlp(64, 12, 0.05, 4).unwrap();
    assert_eq!(mlp.dim(), 49);
    let theta: Vec<f64> = (0..49).map(|_| rng.random_range(-1.0..1.0)).collect();
    assert!(finite_diff_check(&mlp, &theta, 1e-5).unwrap() <= 1e-4);
}

#[test]
fn finite_difference_holds_over_random_points_for_every_kind() {
    let problems = [
        Problem::random_quadratic(8, 0.1, 2.0, 0.0, 21).unwrap(),
        Problem::logistic(50, 5, 1e-2, 22).unwrap(),
        Problem::mlp(40, 8, 0.0, 23).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for p in &problems {
        for _ in 0..20 {
            let theta: Vec<f64> = (0..p.dim()).map(|_| rng.random_range(-1.5..1.5)).collect();
            let err = finite_diff_check(p, &theta, 1e-5).unwrap();
            assert!(err <= 1e-4, "{:?}: {err}", p.kind());
        }
    }
}

#[test]
fn random_quadratic_constants_are_exact() {
    let p = Problem::random_quadratic(7, 0.2, 5.0, 0.0, 17).unwrap();
    let Objective::Quadratic(q) = &p.objective else { unreachable!() };
    let m = nalgebra::DMatrix::from_row_slice(7, 7, q.matrix());
    let eig = m.symmetric_eigen().eigenvalues;
    assert!((eig.max() - p.smoothness()).abs() < 1e-10);
    assert!((eig.min() - 0.2).abs() < 1e-10);
    let star = p.minimizer().unwrap();
    let (f, g) = p.value_and_grad(star).unwrap();
    assert!(crate::linalg::norm_sq(&g).sqrt() < 1e-10);
    assert_eq!(Some(f), p.optimum());
}

#[test]
fn logistic_minimizer_and_smoothness() {
    let p = Problem::logistic(60, 3, 1e-2, 31).unwrap();
    let star = p.minimizer().expect("strongly convex problem has a minimiser");
    assert!(p.grad_norm_sq(star).unwrap() < 1e-20);
    // L bounds the Hessian: check along random directions with finite differences
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (_, gx) = p.value_and_grad(&x).unwrap();
        let (_, gy) = p.value_and_grad(&y).unwrap();
        let ratio = crate::linalg::dist_sq(&gx, &gy).sqrt() / crate::linalg::dist_sq(&x, &y).sqrt();
        assert!(ratio <= p.smoothness() * (1.0 + 1e-12));
    }
}

#[test]
fn error_paths() {
    let p = scalar_half_square();
    assert!(matches!(p.value_and_grad(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    assert!(matches!(p.value_and_grad(&[f64::NAN]), Err(Error::NonFinite(_))));
    assert!(matches!(p.stochastic_grad(&[1.0], &MicroBatch::seeded(0, 0)), Err(Error::EmptyBatch)));
    assert!(matches!(
        p.stochastic_grad(&[1.0], &MicroBatch::indices(vec![0])),
        Err(Error::InvalidConfig(_))
    ));
    let log = Problem::logistic(5, 2, 0.0, 1).unwrap();
    assert!(log.stochastic_grad(&[0.0, 0.0], &MicroBatch::indices(vec![5])).is_err());
    assert!(finite_diff_check(&p, &[1.0], 0.0).is_err());
    assert!(Problem::quadratic(2, vec![1.0, 2.0, 0.0, 1.0], vec![0.0; 2], 0.0).is_err());
    assert!(Problem::quadratic(1, vec![-1.0], vec![0.0], 0.0).is_err());
    assert!(Problem::mlp(10, 60, 0.0, 0).is_err());
}

#[test]
fn config_round_trip_builds_same_problem() {
    let cfg: ProblemConfig = serde_json_like();
    let a = cfg.build().unwrap();
    let b = cfg.build().unwrap();
    assert_eq!(a, b);
    assert_eq!(a.kind(), ProblemKind::Mlp);
}

fn serde_json_like() -> ProblemConfig {
    ProblemConfig::Mlp { samples: 32, hidden: 4, label_flip: 0.1, seed: 3 }
}
