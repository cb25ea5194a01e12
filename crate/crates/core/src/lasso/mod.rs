//! L1-penalized least squares.
//!
//! All solvers minimize
//!
//! ```text
//! (1 / 2n) ‖y − X b‖² + λ ‖b‖₁
//! ```
//!
//! by cyclic coordinate descent on the residual vector. The single-response
//! solver backs the nuisance fit, the contrast fits and the stacked transfer
//! model; [`multi_lasso_fit`] solves the row-separable projection problem
//! `Σⱼ ‖xⱼ − Z hⱼ‖² / 2n + λ Σⱼ ‖hⱼ‖₁` one row at a time.

mod cd;
mod cv;
mod multi;
mod tuning;

pub use cd::{soft_threshold, CoordinateDescent};
pub use cv::{lasso_cv, lambda_grid, LassoCv};
pub use multi::{multi_lasso_fit, MultiLassoFit};
pub use tuning::{lambda_max, rate_lambda, resolve_lambda, resolve_shared_lambda, scaled_lasso_sigma, LambdaChoice};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Debug, Error)]
pub enum LassoError {
    #[error("invalid lasso input: {0}")]
    Input(String),
    #[error("coordinate descent did not converge in {} sweeps (kkt violation {:.3e})", .last.n_iter, .last.kkt_max_violation)]
    NotConverged { last: Box<LassoFit> },
    #[error("projection row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<LassoError>,
    },
}

/// A single-response Lasso problem. The design and response are borrowed.
#[derive(Debug, Clone, Copy)]
pub struct LassoProblem<'a> {
    pub design: &'a DMatrix<f64>,
    pub response: &'a DVector<f64>,
    pub lambda: f64,
    /// Rescale columns to unit mean square before solving; coefficients are
    /// reported on the original scale and λ applies on the rescaled one.
    pub standardize: bool,
    /// Center the design and response and report an unpenalized intercept.
    pub intercept: bool,
}

impl<'a> LassoProblem<'a> {
    pub fn new(design: &'a DMatrix<f64>, response: &'a DVector<f64>, lambda: f64) -> Self {
        LassoProblem { design, response, lambda, standardize: false, intercept: false }
    }

    pub fn validate(&self) -> Result<(), LassoError> {
        let (n, d) = self.design.shape();
        if n < 2 || d < 1 {
            return Err(LassoError::Input(format!("design must be at least 2 × 1, got {n} × {d}")));
        }
        if self.response.len() != n {
            return Err(LassoError::Input(format!("response has {} entries, design has {n} rows", self.response.len())));
        }
        if !crate::linalg::all_finite(self.design.as_slice()) || !crate::linalg::all_finite(self.response.as_slice()) {
            return Err(LassoError::Input("non-finite entry in design or response".into()));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(LassoError::Input(format!("lambda must be finite and ≥ 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub coef: DVector<f64>,
    pub intercept: f64,
    pub objective: f64,
    pub n_iter: usize,
    /// Largest KKT violation of the problem actually solved (the rescaled one
    /// when standardizing).
    pub kkt_max_violation: f64,
    /// Objective after every sweep.
    pub objective_trace: Vec<f64>,
}

/// Penalized objective `(1/2n)‖y − Xb − c‖² + λ‖b‖₁`.
pub fn lasso_objective(design: &DMatrix<f64>, response: &DVector<f64>, coef: &DVector<f64>, intercept: f64, lambda: f64) -> f64 {
    let n = design.nrows() as f64;
    let mut r = response - design * coef;
    r.add_scalar_mut(-intercept);
    r.norm_squared() / (2.0 * n) + lambda * coef.lp_norm(1)
}

pub fn lasso_fit(problem: &LassoProblem<'_>, tol: f64, max_iter: usize) -> Result<LassoFit, LassoError> {
    problem.validate()?;
    if !(tol > 0.0) {
        return Err(LassoError::Input(format!("tol must be > 0, got {tol}")));
    }
    if !problem.standardize && !problem.intercept {
        return CoordinateDescent::new(problem.design).solve(problem.response, problem.lambda, None, tol, max_iter);
    }

    let (n, d) = problem.design.shape();
    let mut x = problem.design.clone();
    let mut y = problem.response.clone();
    let mut x_mean = vec![0.0; d];
    let mut y_mean = 0.0;
    if problem.intercept {
        y_mean = y.mean();
        y.add_scalar_mut(-y_mean);
        for (j, mut col) in x.column_iter_mut().enumerate() {
            x_mean[j] = col.mean();
            col.add_scalar_mut(-x_mean[j]);
        }
    }
    let mut scale = vec![1.0; d];
    if problem.standardize {
        for (j, mut col) in x.column_iter_mut().enumerate() {
            let s = (col.norm_squared() / n as f64).sqrt();
            if s > 0.0 {
                col /= s;
                scale[j] = s;
            }
        }
    }
    let unscale = |fit: LassoFit| -> LassoFit {
        let coef = DVector::from_fn(d, |j, _| fit.coef[j] / scale[j]);
        let intercept = if problem.intercept {
            y_mean - coef.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>()
        } else {
            0.0
        };
        LassoFit { coef, intercept, ..fit }
    };
    match CoordinateDescent::new(&x).solve(&y, problem.lambda, None, tol, max_iter) {
        Ok(fit) => Ok(unscale(fit)),
        Err(LassoError::NotConverged { last }) => Err(LassoError::NotConverged { last: Box::new(unscale(*last)) }),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests;
