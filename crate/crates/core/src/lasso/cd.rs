use nalgebra::{DMatrix, DVector};

use super::{LassoError, LassoFit};

/// `sign(z) · max(|z| − t, 0)`.
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Coordinate-descent solver bound to one design matrix.
///
/// Column mean squares are computed once, so fitting many responses or a
/// whole λ path against the same design only pays for the sweeps.
pub struct CoordinateDescent<'a> {
    design: &'a DMatrix<f64>,
    col_ms: Vec<f64>,
}

impl<'a> CoordinateDescent<'a> {
    pub fn new(design: &'a DMatrix<f64>) -> Self {
        let n = design.nrows() as f64;
        let col_ms = design.column_iter().map(|c| c.norm_squared() / n).collect();
        CoordinateDescent { design, col_ms }
    }

    pub fn design(&self) -> &'a DMatrix<f64> {
        self.design
    }

    /// `Xᵀr / n`.
    pub fn gradient(&self, residual: &DVector<f64>) -> Vec<f64> {
        let n = self.design.nrows() as f64;
        self.design.column_iter().map(|c| c.dot(residual) / n).collect()
    }

    /// Largest KKT violation at `coef` given the matching residual.
    pub fn kkt_violation(&self, coef: &DVector<f64>, residual: &DVector<f64>, lambda: f64) -> f64 {
        self.gradient(residual)
            .iter()
            .zip(coef.iter())
            .map(|(&g, &b)| if b != 0.0 { (g - lambda * b.signum()).abs() } else { (g.abs() - lambda).max(0.0) })
            .fold(0.0, f64::max)
    }

    fn objective(&self, residual: &DVector<f64>, coef: &DVector<f64>, lambda: f64) -> f64 {
        let n = self.design.nrows() as f64;
        residual.norm_squared() / (2.0 * n) + lambda * coef.lp_norm(1)
    }

    /// One pass over `cols`; returns the largest coefficient change.
    fn sweep(&self, cols: impl Iterator<Item = usize>, coef: &mut DVector<f64>, residual: &mut DVector<f64>, lambda: f64) -> f64 {
        let n = self.design.nrows() as f64;
        let mut max_change = 0.0_f64;
        for j in cols {
            let ms = self.col_ms[j];
            if ms == 0.0 {
                coef[j] = 0.0;
                continue;
            }
            let col = self.design.column(j);
            let old = coef[j];
            let z = col.dot(residual) / n + ms * old;
            let new = soft_threshold(z, lambda) / ms;
            if new != old {
                residual.axpy(old - new, &col, 1.0);
                coef[j] = new;
                max_change = max_change.max((new - old).abs());
            }
        }
        max_change
    }

    /// Solves the Lasso for `response` at `lambda`, optionally warm-started.
    ///
    /// Full sweeps alternate with sweeps restricted to the active set. The fit
    /// is returned once a full sweep moves no coefficient by more than `tol`
    /// and the KKT violation is at most `tol`.
    pub fn solve(
        &self,
        response: &DVector<f64>,
        lambda: f64,
        warm: Option<&DVector<f64>>,
        tol: f64,
        max_iter: usize,
    ) -> Result<LassoFit, LassoError> {
        let d = self.design.ncols();
        let mut coef = match warm {
            Some(w) if w.len() == d => w.clone(),
            _ => DVector::zeros(d),
        };
        let mut residual = response - self.design * &coef;
        let mut trace = Vec::new();
        let mut n_iter = 0;
        let mut kkt = f64::INFINITY;

        while n_iter < max_iter {
            let change = self.sweep(0..d, &mut coef, &mut residual, lambda);
            n_iter += 1;
            trace.push(self.objective(&residual, &coef, lambda));
            if change < tol {
                kkt = self.kkt_violation(&coef, &residual, lambda);
                if kkt <= tol {
                    break;
                }
            }
            let active: Vec<usize> = (0..d).filter(|&j| coef[j] != 0.0).collect();
            while n_iter < max_iter && !active.is_empty() {
                let change = self.sweep(active.iter().copied(), &mut coef, &mut residual, lambda);
                n_iter += 1;
                trace.push(self.objective(&residual, &coef, lambda));
                if change < tol {
                    break;
                }
            }
        }
        if !(kkt <= tol) {
            kkt = self.kkt_violation(&coef, &residual, lambda);
        }
        let fit = LassoFit {
            objective: self.objective(&residual, &coef, lambda),
            coef,
            intercept: 0.0,
            n_iter,
            kkt_max_violation: kkt,
            objective_trace: trace,
        };
        if fit.kkt_max_violation <= tol {
            Ok(fit)
        } else {
            Err(LassoError::NotConverged { last: Box::new(fit) })
        }
    }
}
