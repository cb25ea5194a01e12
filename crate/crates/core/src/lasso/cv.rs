//! K-fold cross-validation over a decreasing λ grid.

use nalgebra::{DMatrix, DVector};

use super::{CoordinateDescent, LassoError, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::linalg::{select_entries, select_rows};
use crate::rng::fold_assignment;

#[derive(Debug, Clone, PartialEq)]
pub struct LassoCv {
    pub best_lambda: f64,
    /// Mean out-of-fold squared error per grid entry.
    pub cv_errors: Vec<f64>,
}

/// `count` log-spaced levels from `top` down to `top · min_ratio`.
pub fn lambda_grid(top: f64, count: usize, min_ratio: f64) -> Vec<f64> {
    let top = if top > 0.0 { top } else { 1e-8 };
    let count = count.max(1);
    if count == 1 {
        return vec![top];
    }
    let step = min_ratio.ln() / (count - 1) as f64;
    (0..count).map(|k| top * (step * k as f64).exp()).collect()
}

fn check_grid(n: usize, grid: &[f64], folds: usize) -> Result<(), LassoError> {
    if folds < 2 {
        return Err(LassoError::Input(format!("need at least 2 folds, got {folds}")));
    }
    if n < folds {
        return Err(LassoError::Input(format!("{n} rows cannot fill {folds} folds")));
    }
    if grid.is_empty() {
        return Err(LassoError::Input("empty lambda grid".into()));
    }
    if grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(LassoError::Input("lambda grid entries must be finite and ≥ 0".into()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(LassoError::Input("lambda grid must be strictly decreasing".into()));
    }
    Ok(())
}

struct Split {
    train: Vec<usize>,
    test: Vec<usize>,
}

fn splits(n: usize, folds: usize, seed: u64) -> Vec<Split> {
    let assign = fold_assignment(n, folds, seed);
    (0..folds)
        .map(|k| Split {
            train: (0..n).filter(|&i| assign[i] != k).collect(),
            test: (0..n).filter(|&i| assign[i] == k).collect(),
        })
        .collect()
}

/// Held-out squared errors (summed) along the grid, warm-starting each level
/// from the previous one.
fn path_errors(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    split: &Split,
    grid: &[f64],
) -> Result<Vec<f64>, LassoError> {
    let xtr = select_rows(design, &split.train);
    let ytr = select_entries(response, &split.train);
    let xte = select_rows(design, &split.test);
    let yte = select_entries(response, &split.test);
    let solver = CoordinateDescent::new(&xtr);
    let mut warm: Option<DVector<f64>> = None;
    let mut out = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let fit = solver.solve(&ytr, lambda, warm.as_ref(), DEFAULT_TOL, DEFAULT_MAX_ITER)?;
        out.push((&yte - &xte * &fit.coef).norm_squared());
        warm = Some(fit.coef);
    }
    Ok(out)
}

/// Picks the grid entry with the smallest mean out-of-fold squared error;
/// exact ties go to the larger λ.
pub fn lasso_cv(design: &DMatrix<f64>, response: &DVector<f64>, lambda_grid: &[f64], folds: usize, seed: u64) -> Result<LassoCv, LassoError> {
    let n = design.nrows();
    check_grid(n, lambda_grid, folds)?;
    if response.len() != n {
        return Err(LassoError::Input("response length does not match design".into()));
    }
    let mut totals = vec![0.0; lambda_grid.len()];
    for split in splits(n, folds, seed) {
        for (t, e) in totals.iter_mut().zip(path_errors(design, response, &split, lambda_grid)?) {
            *t += e;
        }
    }
    Ok(pick(lambda_grid, totals.iter().map(|t| t / n as f64).collect()))
}

fn pick(grid: &[f64], cv_errors: Vec<f64>) -> LassoCv {
    let mut best = 0;
    for (k, e) in cv_errors.iter().enumerate() {
        if *e < cv_errors[best] {
            best = k;
        }
    }
    LassoCv { best_lambda: grid[best], cv_errors }
}

/// Shared-λ CV for the projection problem: the loss aggregates every row.
pub(crate) fn multi_lasso_cv(x: &DMatrix<f64>, z: &DMatrix<f64>, lambda_grid: &[f64], folds: usize, seed: u64) -> Result<LassoCv, LassoError> {
    let n = z.nrows();
    check_grid(n, lambda_grid, folds)?;
    let mut totals = vec![0.0; lambda_grid.len()];
    for split in splits(n, folds, seed) {
        for (j, col) in x.column_iter().enumerate() {
            let errs = path_errors(z, &col.into_owned(), &split, lambda_grid)
                .map_err(|e| LassoError::Row { row: j, source: Box::new(e) })?;
            for (t, e) in totals.iter_mut().zip(errs) {
                *t += e;
            }
        }
    }
    let denom = (n * x.ncols().max(1)) as f64;
    Ok(pick(lambda_grid, totals.iter().map(|t| t / denom).collect()))
}
