//! Conversion to `A x = b, x ≥ 0` with sparse columns.

use super::LinearProgram;

/// Equality rows are linearly inconsistent.
#[derive(Debug)]
pub struct Inconsistent;

/// Where each standard-form column came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColumnKind {
    Structural,
    Surplus,
    Artificial,
}

/// Compressed sparse columns.
#[derive(Debug, Default)]
pub struct SparseCols {
    pub start: Vec<usize>,
    pub row: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseCols {
    pub fn push(&mut self, entries: impl IntoIterator<Item = (usize, f64)>) -> usize {
        if self.start.is_empty() {
            self.start.push(0);
        }
        for (i, v) in entries {
            if v != 0.0 {
                self.row.push(i);
                self.val.push(v);
            }
        }
        self.start.push(self.row.len());
        self.start.len() - 2
    }

    pub fn len(&self) -> usize {
        self.start.len().saturating_sub(1)
    }

    pub fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.start[j], self.start[j + 1]);
        self.row[a..b].iter().copied().zip(self.val[a..b].iter().copied())
    }

    pub fn nnz(&self, j: usize) -> usize {
        self.start[j + 1] - self.start[j]
    }

    pub fn dot(&self, j: usize, y: &[f64]) -> f64 {
        self.col(j).map(|(i, v)| v * y[i]).sum()
    }
}

pub struct StandardForm {
    pub rows: usize,
    pub cols: SparseCols,
    pub kind: Vec<ColumnKind>,
    pub cost: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Initial basis, one column per row.
    pub crash: Vec<usize>,
    /// Original variable `j` is `x[pos] − x[neg]`.
    map: Vec<(usize, Option<usize>)>,
}

const DEPENDENT_TOL: f64 = 1e-10;

/// Indices of a maximal independent subset of equality rows, in order.
fn independent_rows(lp: &LinearProgram) -> Result<Vec<usize>, Inconsistent> {
    let m = lp.vars();
    let mut basis: Vec<(usize, Vec<f64>, f64)> = Vec::new();
    let mut keep = Vec::new();
    for i in 0..lp.eq_lhs.nrows() {
        let mut row: Vec<f64> = lp.eq_lhs.row(i).iter().copied().collect();
        let mut rhs = lp.eq_rhs[i];
        let scale = row.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(rhs.abs()).max(1.0);
        for (pc, brow, brhs) in &basis {
            let f = row[*pc];
            if f != 0.0 {
                row.iter_mut().zip(brow).for_each(|(r, b)| *r -= f * b);
                rhs -= f * brhs;
            }
        }
        let (pc, big) = row
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |acc, (j, v)| if v.abs() > acc.1 { (j, v.abs()) } else { acc });
        if m == 0 || big <= DEPENDENT_TOL * scale {
            if rhs.abs() > 1e-9 * scale {
                return Err(Inconsistent);
            }
            continue;
        }
        let p = row[pc];
        row.iter_mut().for_each(|v| *v /= p);
        basis.push((pc, row, rhs / p));
        keep.push(i);
    }
    Ok(keep)
}

impl StandardForm {
    pub fn build(lp: &LinearProgram) -> Result<Self, Inconsistent> {
        let eq_rows = independent_rows(lp)?;
        let (r, q) = (eq_rows.len(), lp.ineq_lhs.nrows());
        let rows = r + q;

        // row equilibration: each row scaled to unit max entry
        let mut scale = vec![1.0; rows];
        let mut rhs = vec![0.0; rows];
        for (k, &i) in eq_rows.iter().enumerate() {
            let big = lp.eq_lhs.row(i).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            scale[k] = if big > 0.0 { 1.0 / big } else { 1.0 };
            rhs[k] = lp.eq_rhs[i] * scale[k];
        }
        for i in 0..q {
            let big = lp.ineq_lhs.row(i).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            scale[r + i] = if big > 0.0 { 1.0 / big } else { 1.0 };
            rhs[r + i] = lp.ineq_rhs[i] * scale[r + i];
        }

        let mut cols = SparseCols::default();
        let mut kind = Vec::new();
        let mut cost = Vec::new();
        let mut map = Vec::with_capacity(lp.vars());
        let (scale, eq_rows) = (&scale, &eq_rows);
        let column = |j: usize, sign: f64| -> Vec<(usize, f64)> {
            let eq = eq_rows.iter().enumerate().map(|(k, &i)| (k, sign * lp.eq_lhs[(i, j)] * scale[k]));
            let ineq = (0..q).map(|i| (r + i, sign * lp.ineq_lhs[(i, j)] * scale[r + i]));
            eq.chain(ineq).collect()
        };
        for j in 0..lp.vars() {
            let pos = cols.push(column(j, 1.0));
            kind.push(ColumnKind::Structural);
            cost.push(lp.cost[j]);
            let neg = if lp.nonneg[j] {
                None
            } else {
                let c = cols.push(column(j, -1.0));
                kind.push(ColumnKind::Structural);
                cost.push(-lp.cost[j]);
                Some(c)
            };
            map.push((pos, neg));
        }
        let n_struct = cols.len();
        let mut surplus = vec![usize::MAX; rows];
        for (i, s) in surplus.iter_mut().enumerate().skip(r) {
            *s = cols.push([(i, -1.0)]);
            kind.push(ColumnKind::Surplus);
            cost.push(0.0);
        }

        let mut sf = StandardForm { rows, cols, kind, cost, rhs, crash: Vec::new(), map };
        sf.crash = sf.crash_basis(r, n_struct, &surplus);
        Ok(sf)
    }

    /// Triangular starting basis.
    ///
    /// A nonnegative structural column touching only inequality rows, all
    /// with positive coefficients, can satisfy those rows on its own: it is
    /// made basic in its tightest row and the other rows' surpluses absorb
    /// the slack. Columns are taken greedily with disjoint row supports.
    /// Inequalities with nonpositive right-hand side start on their surplus
    /// and every row left over gets an artificial.
    fn crash_basis(&mut self, eq_count: usize, n_struct: usize, surplus: &[usize]) -> Vec<usize> {
        let mut basis = vec![usize::MAX; self.rows];
        let mut covered = vec![false; self.rows];
        let split: Vec<bool> = {
            let mut s = vec![false; n_struct];
            for &(_, neg) in &self.map {
                if let Some(n) = neg {
                    s[n] = true;
                    s[n - 1] = true;
                }
            }
            s
        };
        for j in 0..n_struct {
            if split[j] || self.cost[j] < 0.0 {
                continue;
            }
            let entries: Vec<(usize, f64)> = self.cols.col(j).collect();
            if entries.is_empty() || entries.iter().any(|&(i, v)| i < eq_count || v <= 0.0 || covered[i]) {
                continue;
            }
            let (tight, level) = entries
                .iter()
                .map(|&(i, v)| (i, self.rhs[i] / v))
                .fold((usize::MAX, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            if level <= 0.0 {
                continue;
            }
            for &(i, _) in &entries {
                covered[i] = true;
                basis[i] = if i == tight { j } else { surplus[i] };
            }
        }
        for i in 0..self.rows {
            if covered[i] {
                continue;
            }
            if i >= eq_count && self.rhs[i] <= 0.0 {
                basis[i] = surplus[i];
            } else {
                let sign = if self.rhs[i] < 0.0 { -1.0 } else { 1.0 };
                basis[i] = self.cols.push([(i, sign)]);
                self.kind.push(ColumnKind::Artificial);
                self.cost.push(0.0);
            }
        }
        basis
    }

    pub fn recover(&self, values: &[f64]) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_iterator(
            self.map.len(),
            self.map.iter().map(|&(p, n)| values[p] - n.map_or(0.0, |n| values[n])),
        )
    }
}
