use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{CoordinateDescent, LassoError, DEFAULT_MAX_ITER};

/// Row-separable projection fit: row `j` of `h_matrix` is the Lasso
/// coefficient vector of column `j` of `x` regressed on `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLassoFit {
    /// `p1 × p2`
    pub h_matrix: DMatrix<f64>,
    pub per_row_objectives: Vec<f64>,
    pub kkt_max_violation: f64,
}

pub fn multi_lasso_fit(x: &DMatrix<f64>, z: &DMatrix<f64>, lambda: f64, tol: f64) -> Result<MultiLassoFit, LassoError> {
    if x.nrows() != z.nrows() {
        return Err(LassoError::Input(format!("x has {} rows, z has {}", x.nrows(), z.nrows())));
    }
    if !(lambda >= 0.0) || !(tol > 0.0) {
        return Err(LassoError::Input(format!("need lambda ≥ 0 and tol > 0 (got {lambda}, {tol})")));
    }
    if !crate::linalg::all_finite(x.as_slice()) || !crate::linalg::all_finite(z.as_slice()) {
        return Err(LassoError::Input("non-finite entry in x or z".into()));
    }
    let (p1, p2) = (x.ncols(), z.ncols());
    if p2 == 0 {
        return Ok(MultiLassoFit {
            h_matrix: DMatrix::zeros(p1, 0),
            per_row_objectives: x.column_iter().map(|c| c.norm_squared() / (2.0 * x.nrows() as f64)).collect(),
            kkt_max_violation: 0.0,
        });
    }
    let solver = CoordinateDescent::new(z);
    let fits: Vec<_> = (0..p1)
        .into_par_iter()
        .map(|j| {
            let y: DVector<f64> = x.column(j).into_owned();
            solver
                .solve(&y, lambda, None, tol, DEFAULT_MAX_ITER)
                .map_err(|e| LassoError::Row { row: j, source: Box::new(e) })
        })
        .collect::<Result<_, _>>()?;
    let mut h_matrix = DMatrix::zeros(p1, p2);
    for (j, fit) in fits.iter().enumerate() {
        h_matrix.row_mut(j).copy_from(&fit.coef.transpose());
    }
    Ok(MultiLassoFit {
        h_matrix,
        per_row_objectives: fits.iter().map(|f| f.objective).collect(),
        kkt_max_violation: fits.iter().map(|f| f.kkt_max_violation).fold(0.0, f64::max),
    })
}
