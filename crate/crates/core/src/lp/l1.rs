//! Least-absolute-deviation fits under linear equality constraints.

use nalgebra::{DMatrix, DVector};

use super::{solve_lp, LinearProgram, LpError, LpStatus, DEFAULT_FEAS_TOL};

#[derive(Debug, Clone)]
pub struct L1Fit {
    pub weights: DVector<f64>,
    /// `‖design · weights − target‖₁`.
    pub residual_l1: f64,
}

/// LP over `(w, w̃)` minimizing `Σ w̃` with `w̃ ≥ ±(design·w − target)`,
/// `eq_lhs · w = eq_rhs` and `w, w̃ ≥ 0`.
///
/// The inequality block is `[−X I; X I] (w, w̃) ≥ (−target, target)`.
pub fn l1_fit_program(
    design: &DMatrix<f64>,
    target: &DVector<f64>,
    eq_lhs: &DMatrix<f64>,
    eq_rhs: &DVector<f64>,
) -> Result<LinearProgram, LpError> {
    let (q, m) = design.shape();
    if q == 0 || m == 0 {
        return Err(LpError::Input("empty design".into()));
    }
    if target.len() != q {
        return Err(LpError::Input(format!("target has {} entries for {q} rows", target.len())));
    }
    if eq_lhs.ncols() != m || eq_lhs.nrows() != eq_rhs.len() {
        return Err(LpError::Input("equality block shape does not match the design".into()));
    }
    let vars = m + q;
    let cost = DVector::from_fn(vars, |j, _| if j < m { 0.0 } else { 1.0 });
    let mut ineq = DMatrix::zeros(2 * q, vars);
    let mut rhs = DVector::zeros(2 * q);
    for i in 0..q {
        for j in 0..m {
            ineq[(i, j)] = -design[(i, j)];
            ineq[(q + i, j)] = design[(i, j)];
        }
        ineq[(i, m + i)] = 1.0;
        ineq[(q + i, m + i)] = 1.0;
        rhs[i] = -target[i];
        rhs[q + i] = target[i];
    }
    let mut eq = DMatrix::zeros(eq_lhs.nrows(), vars);
    eq.view_mut((0, 0), (eq_lhs.nrows(), m)).copy_from(eq_lhs);
    Ok(LinearProgram::new(cost).with_eq(eq, eq_rhs.clone()).with_ineq(ineq, rhs))
}

/// Minimizes `‖design·w − target‖₁` over `w ≥ 0` with `eq_lhs·w = eq_rhs`.
pub fn solve_l1_fit(
    design: &DMatrix<f64>,
    target: &DVector<f64>,
    eq_lhs: &DMatrix<f64>,
    eq_rhs: &DVector<f64>,
) -> Result<L1Fit, LpError> {
    let lp = l1_fit_program(design, target, eq_lhs, eq_rhs)?;
    let sol = solve_lp(&lp, DEFAULT_FEAS_TOL)?;
    match sol.status {
        LpStatus::Optimal => {
            let weights = sol.x.rows(0, design.ncols()).into_owned();
            let residual_l1 = (design * &weights - target).lp_norm(1);
            Ok(L1Fit { weights, residual_l1 })
        }
        // the residual block is always satisfiable, so only the equalities can fail
        LpStatus::Infeasible => Err(LpError::Infeasible { block: "equality" }),
        LpStatus::Unbounded => Err(LpError::Numerical("L1 objective reported unbounded".into())),
    }
}
