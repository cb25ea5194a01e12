//! Dense linear programming.
//!
//! Problems have the form
//!
//! ```text
//! minimize    cᵀx
//! subject to  E x  = e
//!             G x ≥ g
//!             x_j ≥ 0   for j in the nonnegative mask
//! ```
//!
//! and are solved by a two-phase revised simplex method ([`solve_lp`]).
//! [`solve_l1_fit`] compiles least-absolute-deviation fits with linear
//! equality constraints onto the same solver.

mod l1;
mod simplex;
mod standard;


use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use l1::{l1_fit_program, solve_l1_fit, L1Fit};

/// Default absolute feasibility tolerance on constraint residuals.
pub const DEFAULT_FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("invalid linear program: {0}")]
    Input(String),
    #[error("{block} constraints are infeasible")]
    Infeasible { block: &'static str },
    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub cost: DVector<f64>,
    pub eq_lhs: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    /// Rows are `≥` constraints.
    pub ineq_lhs: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
    pub nonneg: Vec<bool>,
}

impl LinearProgram {
    /// A program over `vars` nonnegative variables with no constraints yet.
    pub fn new(cost: DVector<f64>) -> Self {
        let m = cost.len();
        LinearProgram {
            cost,
            eq_lhs: DMatrix::zeros(0, m),
            eq_rhs: DVector::zeros(0),
            ineq_lhs: DMatrix::zeros(0, m),
            ineq_rhs: DVector::zeros(0),
            nonneg: vec![true; m],
        }
    }

    pub fn with_eq(mut self, lhs: DMatrix<f64>, rhs: DVector<f64>) -> Self {
        self.eq_lhs = lhs;
        self.eq_rhs = rhs;
        self
    }

    pub fn with_ineq(mut self, lhs: DMatrix<f64>, rhs: DVector<f64>) -> Self {
        self.ineq_lhs = lhs;
        self.ineq_rhs = rhs;
        self
    }

    pub fn vars(&self) -> usize {
        self.cost.len()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let m = self.vars();
        if self.eq_lhs.ncols() != m || self.ineq_lhs.ncols() != m || self.nonneg.len() != m {
            return Err(LpError::Input(format!("column counts disagree with {m} variables")));
        }
        if self.eq_lhs.nrows() != self.eq_rhs.len() || self.ineq_lhs.nrows() != self.ineq_rhs.len() {
            return Err(LpError::Input("right-hand side length differs from row count".into()));
        }
        let finite = |s: &[f64]| s.iter().all(|v| v.is_finite());
        if !(finite(self.cost.as_slice())
            && finite(self.eq_lhs.as_slice())
            && finite(self.eq_rhs.as_slice())
            && finite(self.ineq_lhs.as_slice())
            && finite(self.ineq_rhs.as_slice()))
        {
            return Err(LpError::Input("non-finite entry".into()));
        }
        Ok(())
    }

    /// Largest constraint violation of `x`, each row measured relative to
    /// `1 + |rhs| + Σ|a_ij x_j|`.
    pub fn max_relative_violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst = 0.0_f64;
        let mut row_check = |lhs: &DMatrix<f64>, rhs: &DVector<f64>, equality: bool| {
            for i in 0..lhs.nrows() {
                let (mut act, mut mag) = (0.0, 0.0);
                for j in 0..lhs.ncols() {
                    let t = lhs[(i, j)] * x[j];
                    act += t;
                    mag += t.abs();
                }
                let gap = act - rhs[i];
                let viol = if equality { gap.abs() } else { (-gap).max(0.0) };
                worst = worst.max(viol / (1.0 + rhs[i].abs() + mag));
            }
        };
        row_check(&self.eq_lhs, &self.eq_rhs, true);
        row_check(&self.ineq_lhs, &self.ineq_rhs, false);
        for (j, &nn) in self.nonneg.iter().enumerate() {
            if nn {
                worst = worst.max(-x[j]);
            }
        }
        worst
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub status: LpStatus,
    pub iterations: usize,
}

/// Solves `lp` to optimality or classifies it as infeasible or unbounded.
///
/// An optimal answer has every constraint satisfied to `feas_tol` relative
/// to the row magnitude and nonnegative reduced costs at a freshly
/// refactored basis. Errors are reserved for malformed input and numerical
/// breakdown.
pub fn solve_lp(lp: &LinearProgram, feas_tol: f64) -> Result<LpSolution, LpError> {
    lp.validate()?;
    if !(feas_tol > 0.0) {
        return Err(LpError::Input("feasibility tolerance must be positive".into()));
    }
    let sf = match standard::StandardForm::build(lp) {
        Ok(sf) => sf,
        Err(standard::Inconsistent) => {
            return Ok(LpSolution {
                x: DVector::zeros(lp.vars()),
                objective: f64::NAN,
                status: LpStatus::Infeasible,
                iterations: 0,
            })
        }
    };
    let outcome = simplex::run(&sf, feas_tol)?;
    let x = sf.recover(&outcome.values);
    let objective = lp.cost.dot(&x);
    if outcome.status == LpStatus::Optimal {
        let viol = lp.max_relative_violation(&x);
        if viol > feas_tol.max(1e-9) * 10.0 {
            return Err(LpError::Numerical(format!("final point violates constraints by {viol:e}")));
        }
    }
    Ok(LpSolution { x, objective, status: outcome.status, iterations: outcome.iterations })
}
