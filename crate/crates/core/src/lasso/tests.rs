use super::*;
use crate::rng::stream_rng;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream_rng(seed, 11);
    DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng))
}

fn gaussian_vec(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = stream_rng(seed, 12);
    DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng))
}

fn sparse_response(x: &DMatrix<f64>, seed: u64) -> DVector<f64> {
    let mut beta = DVector::zeros(x.ncols());
    beta[0] = 1.5;
    beta[2] = -2.0;
    beta[x.ncols() - 1] = 0.7;
    x * beta + gaussian_vec(x.nrows(), seed) * 0.5
}

#[test]
fn null_threshold_gives_zero() {
    let x = gaussian(40, 12, 1);
    let y = sparse_response(&x, 2);
    let lmax = lambda_max(&x, &y);
    for lambda in [lmax, lmax * 1.5] {
        let fit = lasso_fit(&LassoProblem::new(&x, &y, lambda), 1e-9, 1000).unwrap();
        assert!(fit.coef.iter().all(|&b| b == 0.0));
    }
    let fit = lasso_fit(&LassoProblem::new(&x, &y, lmax * 0.99), 1e-9, 1000).unwrap();
    assert!(fit.coef.iter().any(|&b| b != 0.0));
}

#[test]
fn orthonormal_design_matches_soft_threshold() {
    let n = 10;
    let q = gaussian(n, n, 3).qr().q();
    let x = q * (n as f64).sqrt();
    let y = gaussian_vec(n, 4) * 2.0;
    let ols = x.tr_mul(&y) / n as f64;
    for lambda in [0.0, 0.1, 0.5, 1.3] {
        let fit = lasso_fit(&LassoProblem::new(&x, &y, lambda), 1e-12, 10_000).unwrap();
        for j in 0..n {
            assert!((fit.coef[j] - soft_threshold(ols[j], lambda)).abs() < 1e-8);
        }
    }
}

#[test]
fn unpenalized_fit_matches_normal_equations() {
    let x = gaussian(60, 8, 5);
    let y = sparse_response(&x, 6);
    let xtx = x.tr_mul(&x);
    let ols = xtx.cholesky().unwrap().solve(&x.tr_mul(&y));
    let fit = lasso_fit(&LassoProblem::new(&x, &y, 0.0), 1e-13, 100_000).unwrap();
    assert!((fit.coef - &ols).amax() < 1e-8);
    let zero = lasso_objective(&x, &y, &DVector::zeros(8), 0.0, 0.0);
    assert!(fit.objective <= zero);
}

#[test]
fn kkt_and_monotone_trace() {
    let x = gaussian(80, 30, 7);
    let y = sparse_response(&x, 8);
    let lambda = 0.1;
    let fit = lasso_fit(&LassoProblem::new(&x, &y, lambda), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert!(fit.kkt_max_violation <= DEFAULT_TOL);
    for w in fit.objective_trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
    }
    let zero = lasso_objective(&x, &y, &DVector::zeros(30), 0.0, lambda);
    assert!(fit.objective <= zero);
    let recomputed = lasso_objective(&x, &y, &fit.coef, 0.0, lambda);
    assert!((recomputed - fit.objective).abs() < 1e-12);
}

#[test]
fn l1_norm_shrinks_along_path() {
    let x = gaussian(50, 20, 9);
    let y = sparse_response(&x, 10);
    let grid = lambda_grid(lambda_max(&x, &y), 25, 1e-3);
    let norms: Vec<f64> = grid
        .iter()
        .map(|&l| lasso_fit(&LassoProblem::new(&x, &y, l), 1e-10, 100_000).unwrap().coef.lp_norm(1))
        .collect();
    // grid is decreasing, so norms must be nondecreasing along it
    for w in norms.windows(2) {
        assert!(w[1] >= w[0] - 1e-7, "{norms:?}");
    }
}

#[test]
fn warm_start_matches_cold_start() {
    let x = gaussian(70, 25, 11);
    let y = sparse_response(&x, 12);
    let solver = CoordinateDescent::new(&x);
    let grid = lambda_grid(lambda_max(&x, &y), 15, 1e-2);
    let mut warm: Option<DVector<f64>> = None;
    for &l in &grid {
        let w = solver.solve(&y, l, warm.as_ref(), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let c = solver.solve(&y, l, None, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((w.objective - c.objective).abs() <= 10.0 * DEFAULT_TOL);
        warm = Some(w.coef);
    }
}

#[test]
fn input_and_convergence_errors() {
    let mut x = gaussian(10, 3, 13);
    let y = gaussian_vec(10, 14);
    assert!(matches!(lasso_fit(&LassoProblem::new(&x, &y, -1.0), 1e-7, 10), Err(LassoError::Input(_))));
    x[(2, 1)] = f64::NAN;
    assert!(matches!(lasso_fit(&LassoProblem::new(&x, &y, 0.1), 1e-7, 10), Err(LassoError::Input(_))));

    let x = gaussian(30, 10, 15);
    let y = sparse_response(&x, 16);
    match lasso_fit(&LassoProblem::new(&x, &y, 0.01), 1e-12, 1) {
        Err(LassoError::NotConverged { last }) => {
            assert_eq!(last.n_iter, 1);
            assert_eq!(last.coef.len(), 10);
        }
        other => panic!("expected convergence error, got {other:?}"),
    }
}

#[test]
fn intercept_and_standardize() {
    let x = gaussian(100, 5, 17).add_scalar(3.0);
    let mut beta = DVector::zeros(5);
    beta[1] = 2.0;
    let y = (&x * &beta).add_scalar(4.0) + gaussian_vec(100, 18) * 0.1;
    let p = LassoProblem { intercept: true, ..LassoProblem::new(&x, &y, 0.0) };
    let fit = lasso_fit(&p, 1e-12, 100_000).unwrap();
    assert!((fit.coef[1] - 2.0).abs() < 0.05);
    assert!((fit.intercept - 4.0).abs() < 0.3);

    // rescaling a column leaves the standardized fit's predictions unchanged
    let mut x2 = x.clone();
    x2.column_mut(1).scale_mut(10.0);
    let a = lasso_fit(&LassoProblem { standardize: true, ..LassoProblem::new(&x, &y, 0.05) }, 1e-10, 100_000).unwrap();
    let b = lasso_fit(&LassoProblem { standardize: true, ..LassoProblem::new(&x2, &y, 0.05) }, 1e-10, 100_000).unwrap();
    assert!(((&x * &a.coef) - (&x2 * &b.coef)).amax() < 1e-6);
}

#[test]
fn cv_single_grid_point_and_determinism() {
    let x = gaussian(40, 10, 19);
    let y = sparse_response(&x, 20);
    let one = lasso_cv(&x, &y, &[0.3], 5, 1).unwrap();
    assert_eq!(one.best_lambda, 0.3);
    let grid = lambda_grid(lambda_max(&x, &y), 12, 1e-3);
    let a = lasso_cv(&x, &y, &grid, 5, 99).unwrap();
    let b = lasso_cv(&x, &y, &grid, 5, 99).unwrap();
    assert_eq!(a.best_lambda.to_bits(), b.best_lambda.to_bits());
    assert!(a.cv_errors.iter().zip(&b.cv_errors).all(|(u, v)| u.to_bits() == v.to_bits()));
    assert!(a.best_lambda < grid[0], "signal present, some penalty relief expected");
}

#[test]
fn cv_rejects_bad_input() {
    let x = gaussian(4, 3, 21);
    let y = gaussian_vec(4, 22);
    assert!(lasso_cv(&x, &y, &[0.1], 5, 0).is_err());
    assert!(lasso_cv(&x, &y, &[0.1], 1, 0).is_err());
    assert!(lasso_cv(&x, &y, &[0.1, 0.2], 2, 0).is_err());
    assert!(lasso_cv(&x, &y, &[], 2, 0).is_err());
}

#[test]
fn cv_prefers_sparse_models_on_noise() {
    let mut top_half = 0;
    for rep in 0..50 {
        let x = gaussian(60, 20, 1000 + rep);
        let y = gaussian_vec(60, 2000 + rep);
        let grid = lambda_grid(lambda_max(&x, &y), 20, 0.001 / lambda_max(&x, &y));
        let cv = lasso_cv(&x, &y, &grid, 5, rep).unwrap();
        let idx = grid.iter().position(|&l| l == cv.best_lambda).unwrap();
        if idx < grid.len() / 2 {
            top_half += 1;
        }
    }
    assert!(top_half >= 45, "top half chosen in {top_half}/50 reps");
}

#[test]
fn multi_lasso_zero_when_uncorrelated() {
    // columns of z orthogonal to columns of x: Zᵀ X = 0
    let q = gaussian(20, 6, 23).qr().q();
    let x = q.columns(0, 3).into_owned();
    let z = q.columns(3, 3).into_owned();
    let fit = multi_lasso_fit(&x, &z, 0.01, 1e-9).unwrap();
    assert!(fit.h_matrix.iter().all(|&h| h == 0.0));
}

#[test]
fn multi_lasso_rows_match_single_fits() {
    let z = gaussian(50, 8, 24);
    let x = &z.columns(0, 5) * 0.8 + gaussian(50, 5, 25);
    let lambda = 0.05;
    let multi = multi_lasso_fit(&x, &z, lambda, 1e-12).unwrap();
    for j in 0..5 {
        let col = x.column(j).into_owned();
        let single = lasso_fit(&LassoProblem::new(&z, &col, lambda), 1e-12, DEFAULT_MAX_ITER).unwrap();
        let diff = (multi.h_matrix.row(j).transpose() - &single.coef).amax();
        assert!(diff < 1e-10, "row {j}: {diff}");
        assert!((multi.per_row_objectives[j] - single.objective).abs() < 1e-12);
    }
    let x1 = x.columns(0, 1).into_owned();
    let one = multi_lasso_fit(&x1, &z, lambda, 1e-12).unwrap();
    assert_eq!(one.h_matrix.row(0), multi.h_matrix.row(0));
}

#[test]
fn multi_lasso_tags_failing_row() {
    let z = gaussian(30, 10, 26);
    let x = gaussian(30, 2, 27);
    let mut bad = x.clone();
    bad[(0, 1)] = f64::INFINITY;
    assert!(multi_lasso_fit(&bad, &z, 0.1, 1e-7).is_err());
}

#[test]
fn rate_lambda_is_sensible() {
    let x = gaussian(200, 150, 28);
    let mut beta = DVector::zeros(150);
    beta[0] = 3.0;
    let y = &x * beta + gaussian_vec(200, 29);
    let l = resolve_lambda(&x, &y, LambdaChoice::default()).unwrap();
    let expected = (2.0 * (150f64).ln() / 200.0).sqrt();
    assert!(l > 0.5 * expected && l < 2.0 * expected, "lambda {l} vs {expected}");
}

#[test]
fn scaled_lasso_tracks_noise_level() {
    for &(n, d) in &[(200, 40), (120, 300)] {
        let x = gaussian(n, d, 30);
        let mut beta = DVector::zeros(d);
        beta[0] = 2.0;
        beta[3] = -1.0;
        let y = &x * beta + gaussian_vec(n, 31) * 0.5;
        let s = scaled_lasso_sigma(&CoordinateDescent::new(&x), &y).unwrap();
        assert!(s > 0.35 && s < 0.7, "n={n} d={d} sigma={s}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn solution_beats_trivial_candidates(seed in 0u64..10_000, lambda in 0.0f64..0.5) {
        let x = gaussian(25, 6, seed);
        let y = sparse_response(&x, seed + 1);
        let fit = lasso_fit(&LassoProblem::new(&x, &y, lambda), 1e-10, 100_000).unwrap();
        let zero = lasso_objective(&x, &y, &DVector::zeros(6), 0.0, lambda);
        let ols = x.tr_mul(&x).cholesky().unwrap().solve(&x.tr_mul(&y));
        let at_ols = lasso_objective(&x, &y, &ols, 0.0, lambda);
        prop_assert!(fit.objective <= zero + 1e-12);
        prop_assert!(fit.objective <= at_ols + 1e-12);
        prop_assert!(fit.kkt_max_violation <= 1e-10);
    }

    #[test]
    fn soft_threshold_is_shrinkage(z in -10.0f64..10.0, t in 0.0f64..5.0) {
        let s = soft_threshold(z, t);
        prop_assert!(s.abs() <= z.abs());
        prop_assert!(s == 0.0 || s.signum() == z.signum());
        prop_assert!((z - s).abs() <= t + 1e-15);
    }
}
