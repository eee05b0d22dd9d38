use smc_core::exact::{remark_check, solve_structured_irls_exact, ExactIrlsConfig};
use smc_core::generators::{gen_low_rank_sparse, normalize_spectral, GeneratorSpec};
use smc_core::harness::{relative_error, run_grid, GridSpec, SolverSettings};
use smc_core::linalg::DenseMatrix;
use smc_core::rng::{rng_from_seed, standard_normal};
use smc_core::sampling::{gather_missing, ObservationMask};
use smc_core::sirls::{estimate_rank, max_rank, solve_sirls, LowRankConfig};
use smc_core::structured::{solve_structured_sirls, StructuredConfig};

/// Rank-1 matrix whose unobserved entries are exactly its zeros.
fn rank_one_with_zero_gaps() -> (DenseMatrix, ObservationMask) {
    let u = [1.0, 0.0, 0.7, 0.0, 0.4, 1.2, 0.0, 0.9, 0.3, 0.0];
    let v = [0.0, 0.8, 1.1, 0.0, 0.5, 0.0, 0.6, 1.3, 0.0, 0.2];
    let m = DenseMatrix::from_fn(10, 10, |i, j| u[i] * v[j]);
    // every nonzero observed, every other zero observed: 50% overall
    let mut zeros_seen = 0;
    let mask = ObservationMask::from_fn(10, 10, |i, j| {
        if m.get(i, j) != 0.0 {
            return true;
        }
        zeros_seen += 1;
        zeros_seen % 2 == 0 && zeros_seen <= 2 * (50 - 36)
    });
    (m, mask)
}

#[test]
fn structured_sirls_recovers_zero_gaps() {
    let (m, mask) = rank_one_with_zero_gaps();
    assert_eq!(mask.observed_count(), 50);
    let cfg = StructuredConfig {
        lowrank: LowRankConfig {
            rank: Some(1),
            max_iter: 1000,
            ..LowRankConfig::default()
        },
        ..StructuredConfig::default()
    };
    let res = solve_structured_sirls(&m, &mask, &cfg).unwrap();
    let err = relative_error(&m, &res.x_hat).unwrap();
    assert!(err < 1e-4, "relative error {err}");
    for (i, j) in mask.observed_pairs() {
        assert_eq!(res.x_hat.get(i, j), m.get(i, j));
    }
    assert!(res.trace.iter().all(|t| t.missing_l1.is_some()));

    let clamped = solve_structured_sirls(&m, &mask, &StructuredConfig { nonneg: true, ..cfg }).unwrap();
    assert!(relative_error(&m, &clamped.x_hat).unwrap() <= err);
    assert!(gather_missing(&clamped.x_hat, &mask).unwrap().values.iter().all(|&v| v >= 0.0));
}

#[test]
fn baseline_completes_uniform_samples() {
    let mut good = 0;
    for seed in 0..5 {
        let m = normalize_spectral(&gen_low_rank_sparse(&GeneratorSpec::new(100, 100, 10, seed)).unwrap()).unwrap();
        let mut rng = rng_from_seed(seed + 50);
        let mask = ObservationMask::from_fn(100, 100, |_, _| rand::Rng::random::<f64>(&mut rng) < 0.6);
        let cfg = LowRankConfig {
            rank: Some(10),
            ..LowRankConfig::default()
        };
        let res = solve_sirls(&m, &mask, &cfg).unwrap();
        if relative_error(&m, &res.x_hat).unwrap() < 1e-2 {
            good += 1;
        }
        if res.converged {
            assert!(*res.distance_trace().last().unwrap() < cfg.tol);
        }
    }
    assert!(good >= 3, "{good}/5 seeds below 1e-2");
}

#[test]
fn rank_bound_example() {
    assert_eq!(max_rank(100, 100, 9000), 69);
    let x = DenseMatrix::from_diag(&[1.0, 0.5, 0.005]);
    let mask = ObservationMask::full(3, 3);
    assert_eq!(estimate_rank(&x, &mask, None), 2);
    assert_eq!(estimate_rank(&x, &mask, Some(7)), 7);
    assert_eq!(estimate_rank(&DenseMatrix::zeros(3, 3), &mask, None), 1);
}

#[test]
fn remark_with_identity_weights() {
    let mut rng = rng_from_seed(12);
    let a = DenseMatrix::from_fn(10, 2, |_, _| standard_normal(&mut rng));
    let b = DenseMatrix::from_fn(2, 10, |_, _| standard_normal(&mut rng));
    let full = a.matmul(&b).unwrap();
    let mask = ObservationMask::from_fn(10, 10, |i, j| i < 6 || j < 6);
    let m = DenseMatrix::from_fn(10, 10, |i, j| if mask.is_observed(i, j) { full.get(i, j) } else { 0.0 });
    let w = vec![1.0; mask.missing_count()];
    let r = remark_check(&m, &mask, &DenseMatrix::identity(10), &w, 1.0).unwrap();
    assert!(r.err_structured <= r.err_plain);

    let big = remark_check(&m, &mask, &DenseMatrix::identity(10), &w, 1e6).unwrap();
    assert!(big.err_structured < 1e-5, "{}", big.err_structured);
}

#[test]
fn exact_irls_respects_remark_on_a_solve() {
    let m = normalize_spectral(&gen_low_rank_sparse(&GeneratorSpec::new(8, 8, 2, 3)).unwrap()).unwrap();
    let mask = ObservationMask::from_fn(8, 8, |i, j| m.get(i, j) != 0.0 || (i + j) % 2 == 0);
    let with = solve_structured_irls_exact(&m, &mask, &ExactIrlsConfig::default()).unwrap();
    let without = solve_structured_irls_exact(
        &m,
        &mask,
        &ExactIrlsConfig {
            alpha: 0.0,
            ..ExactIrlsConfig::default()
        },
    )
    .unwrap();
    for r in [&with, &without] {
        for (i, j) in mask.observed_pairs() {
            assert_eq!(r.x_hat.get(i, j), m.get(i, j));
        }
    }
    assert!(relative_error(&m, &with.x_hat).unwrap() < 1.0);
}

#[test]
fn adding_trials_keeps_earlier_trials() {
    let mut spec = GridSpec::new(GeneratorSpec::new(15, 15, 2, 0), vec![0.5, 0.9], 1, 99);
    spec.settings = SolverSettings::default().with_rank(Some(2));
    let one = run_grid(&spec).unwrap();
    spec.trials = 2;
    let two = run_grid(&spec).unwrap();
    for (a, b) in one.iter().zip(&two) {
        assert_eq!(a.observed[0], b.observed[0]);
        for (sa, sb) in a.solvers.iter().zip(&b.solvers) {
            assert_eq!(sa.errors[0], sb.errors[0]);
        }
    }
}
