//! Penalty-level selection.

use nalgebra::{DMatrix, DVector};

use rayon::prelude::*;

use super::{cv, CoordinateDescent, LassoError};

/// How a penalty level is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaChoice {
    Fixed(f64),
    /// `c · σ̂ · √(2 ln d / n)` with σ̂ from the scaled Lasso.
    Rate { c: f64 },
    /// K-fold CV over `n_lambda` log-spaced levels from `λ_max` down to
    /// `λ_max · min_ratio`.
    CrossValidated { n_lambda: usize, min_ratio: f64, folds: usize, seed: u64 },
}

impl Default for LambdaChoice {
    fn default() -> Self {
        LambdaChoice::Rate { c: 1.0 }
    }
}

/// Smallest λ at which the zero vector solves the Lasso: `‖Xᵀy‖∞ / n`.
pub fn lambda_max(design: &DMatrix<f64>, response: &DVector<f64>) -> f64 {
    let n = design.nrows() as f64;
    design.column_iter().map(|c| (c.dot(response) / n).abs()).fold(0.0, f64::max)
}

pub fn rate_lambda(c: f64, sigma: f64, n: usize, d: usize) -> f64 {
    // ln 1 = 0 would leave a one-column fit unpenalized
    c * sigma * (2.0 * (d.max(2) as f64).ln() / n as f64).sqrt()
}

/// Noise level by the scaled Lasso: alternate `b = lasso(λ₀σ)` and
/// `σ = ‖y − Xb‖ / √n` from `σ = ‖y‖ / √n` until σ settles, with
/// `λ₀ = √(2 ln d / n)`.
pub fn scaled_lasso_sigma(solver: &CoordinateDescent<'_>, response: &DVector<f64>) -> Result<f64, LassoError> {
    let design = solver.design();
    let (n, d) = design.shape();
    let base = rate_lambda(1.0, 1.0, n, d);
    let mut sigma = response.norm() / (n as f64).sqrt();
    let mut warm: Option<DVector<f64>> = None;
    for _ in 0..SCALED_LASSO_ITERS {
        if sigma <= f64::MIN_POSITIVE {
            return Ok(0.0);
        }
        let fit = solver.solve(response, base * sigma, warm.as_ref(), 1e-6 * sigma * sigma, super::DEFAULT_MAX_ITER)?;
        let next = (response - design * &fit.coef).norm() / (n as f64).sqrt();
        let settled = (next - sigma).abs() <= 1e-4 * sigma;
        sigma = next;
        warm = Some(fit.coef);
        if settled {
            break;
        }
    }
    Ok(sigma)
}

const SCALED_LASSO_ITERS: usize = 30;

pub fn resolve_lambda(design: &DMatrix<f64>, response: &DVector<f64>, choice: LambdaChoice) -> Result<f64, LassoError> {
    let (n, d) = design.shape();
    match choice {
        LambdaChoice::Fixed(l) => Ok(l),
        LambdaChoice::Rate { c } => {
            let sigma = scaled_lasso_sigma(&CoordinateDescent::new(design), response)?;
            Ok(rate_lambda(c, sigma, n, d))
        }
        LambdaChoice::CrossValidated { n_lambda, min_ratio, folds, seed } => {
            let grid = cv::lambda_grid(lambda_max(design, response), n_lambda, min_ratio);
            Ok(cv::lasso_cv(design, response, &grid, folds, seed)?.best_lambda)
        }
    }
}

/// One λ shared by every row of the projection problem `X ≈ Z Hᵀ`.
///
/// The rate uses the root mean of the per-row noise levels; cross-validation
/// minimizes the out-of-fold loss summed over rows.
pub fn resolve_shared_lambda(x: &DMatrix<f64>, z: &DMatrix<f64>, choice: LambdaChoice) -> Result<f64, LassoError> {
    let (n, d) = z.shape();
    match choice {
        LambdaChoice::Fixed(l) => Ok(l),
        LambdaChoice::Rate { c } => {
            if x.ncols() == 0 {
                return Ok(0.0);
            }
            let solver = CoordinateDescent::new(z);
            let vars = (0..x.ncols())
                .into_par_iter()
                .map(|j| scaled_lasso_sigma(&solver, &x.column(j).into_owned()).map(|s| s * s))
                .collect::<Result<Vec<_>, _>>()?;
            let mean_var = vars.iter().sum::<f64>() / vars.len() as f64;
            Ok(rate_lambda(c, mean_var.sqrt(), n, d))
        }
        LambdaChoice::CrossValidated { n_lambda, min_ratio, folds, seed } => {
            let top = x
                .column_iter()
                .map(|col| lambda_max(z, &col.into_owned()))
                .fold(0.0, f64::max);
            let grid = cv::lambda_grid(top, n_lambda, min_ratio);
            Ok(cv::multi_lasso_cv(x, z, &grid, folds, seed)?.best_lambda)
        }
    }
}
