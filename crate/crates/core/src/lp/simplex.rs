//! Revised simplex on a standard form with an explicit dense basis inverse.

use super::standard::{ColumnKind, StandardForm};
use super::{LpError, LpStatus};

const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const SINGULAR_TOL: f64 = 1e-12;
const REFACTOR_EVERY: usize = 256;
const DEGENERATE_RUN: usize = 50;
const CERTIFY_ROUNDS: usize = 8;

pub struct Outcome {
    pub status: LpStatus,
    /// One value per standard-form column.
    pub values: Vec<f64>,
    pub iterations: usize,
}

struct Tableau<'a> {
    sf: &'a StandardForm,
    m: usize,
    basis: Vec<usize>,
    /// Row position of each basic column.
    position: Vec<Option<usize>>,
    /// Column-major `m × m`.
    binv: Vec<f64>,
    xb: Vec<f64>,
    duals: Vec<f64>,
    iterations: usize,
    limit: usize,
    since_refactor: usize,
    feas_tol: f64,
}

enum Step {
    Optimal,
    Unbounded,
    Pivoted,
}

impl<'a> Tableau<'a> {
    fn new(sf: &'a StandardForm, feas_tol: f64) -> Result<Self, LpError> {
        let m = sf.rows;
        let n = sf.cols.len();
        let mut t = Tableau {
            sf,
            m,
            basis: sf.crash.clone(),
            position: vec![None; n],
            binv: vec![0.0; m * m],
            xb: vec![0.0; m],
            duals: vec![0.0; m],
            iterations: 0,
            limit: 50 * (m + n) + 1000,
            since_refactor: 0,
            feas_tol,
        };
        for (r, &j) in t.basis.iter().enumerate() {
            t.position[j] = Some(r);
        }
        t.refactor()?;
        Ok(t)
    }

    /// Rebuilds the inverse in product form: starting from the identity,
    /// basis columns are pivoted in sparsest first, each into the free row
    /// where its transformed entry is largest. Row positions may permute.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        self.binv.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            self.binv[i * m + i] = 1.0;
        }
        let mut order = self.basis.clone();
        order.sort_by_key(|&j| self.sf.cols.nnz(j));
        let mut owner = vec![usize::MAX; m];
        for j in order {
            let alpha = self.ftran(j);
            let r = (0..m)
                .filter(|&i| owner[i] == usize::MAX)
                .max_by(|&a, &b| alpha[a].abs().total_cmp(&alpha[b].abs()).then(b.cmp(&a)))
                .ok_or_else(|| LpError::Numerical("basis larger than row count".into()))?;
            if alpha[r].abs() < SINGULAR_TOL {
                return Err(LpError::Numerical("singular basis".into()));
            }
            self.eta_update(r, &alpha);
            owner[r] = j;
        }
        self.basis = owner;
        for (r, &j) in self.basis.iter().enumerate() {
            self.position[j] = Some(r);
        }
        self.xb.iter_mut().for_each(|v| *v = 0.0);
        for (c, &b) in self.sf.rhs.iter().enumerate() {
            if b != 0.0 {
                let col = &self.binv[c * m..(c + 1) * m];
                self.xb.iter_mut().zip(col).for_each(|(x, v)| *x += b * v);
            }
        }
        for x in &mut self.xb {
            if *x < 0.0 && *x > -self.feas_tol {
                *x = 0.0;
            }
        }
        self.since_refactor = 0;
        Ok(())
    }

    /// Left-multiplies the inverse by the elementary matrix that maps
    /// `alpha` to the unit vector `e_r`.
    fn eta_update(&mut self, r: usize, alpha: &[f64]) {
        let m = self.m;
        let ar = alpha[r];
        for c in 0..m {
            let col = &mut self.binv[c * m..(c + 1) * m];
            let t = col[r] / ar;
            if t == 0.0 {
                continue;
            }
            col.iter_mut().zip(alpha).for_each(|(b, &a)| *b -= a * t);
            col[r] = t;
        }
    }

    fn compute_duals(&mut self, cost: &[f64]) {
        let m = self.m;
        for c in 0..m {
            let col = &self.binv[c * m..(c + 1) * m];
            self.duals[c] = self.basis.iter().enumerate().map(|(i, &j)| cost[j] * col[i]).sum();
        }
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for (c, v) in self.sf.cols.col(j) {
            let col = &self.binv[c * m..(c + 1) * m];
            alpha.iter_mut().zip(col).for_each(|(a, b)| *a += v * b);
        }
        alpha
    }

    fn reduced_cost(&self, cost: &[f64], j: usize) -> f64 {
        cost[j] - self.sf.cols.dot(j, &self.duals)
    }

    fn eligible(&self, j: usize, allow_artificial: bool) -> bool {
        self.position[j].is_none() && (allow_artificial || self.sf.kind[j] != ColumnKind::Artificial)
    }

    fn price(&self, cost: &[f64], allow_artificial: bool, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.sf.cols.len() {
            if !self.eligible(j, allow_artificial) {
                continue;
            }
            let d = self.reduced_cost(cost, j);
            if d < -OPT_TOL {
                if bland {
                    return Some((j, d));
                }
                if best.is_none_or(|(_, b)| d < b) {
                    best = Some((j, d));
                }
            }
        }
        best
    }

    /// Leaving row. Harris two-pass normally, plain minimum ratio with
    /// smallest-index ties under Bland's rule.
    fn ratio_test(&self, alpha: &[f64], bland: bool) -> Option<usize> {
        if bland {
            let mut best: Option<(usize, f64)> = None;
            for (i, &a) in alpha.iter().enumerate() {
                if a > PIVOT_TOL {
                    let ratio = self.xb[i].max(0.0) / a;
                    let better = match best {
                        None => true,
                        Some((r, b)) => ratio < b || (ratio == b && self.basis[i] < self.basis[r]),
                    };
                    if better {
                        best = Some((i, ratio));
                    }
                }
            }
            return best.map(|(i, _)| i);
        }
        let delta = self.feas_tol;
        let bound = alpha
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > PIVOT_TOL)
            .map(|(i, &a)| (self.xb[i].max(0.0) + delta) / a)
            .fold(f64::INFINITY, f64::min);
        if bound.is_infinite() {
            return None;
        }
        alpha
            .iter()
            .enumerate()
            .filter(|(i, &a)| a > PIVOT_TOL && self.xb[*i].max(0.0) / a <= bound)
            .max_by(|x, y| x.1.total_cmp(y.1))
            .map(|(i, _)| i)
    }

    /// Exchanges column `enter` into row `leave`; returns the step length.
    fn pivot(&mut self, enter: usize, leave: usize, alpha: &[f64]) -> f64 {
        let m = self.m;
        let ar = alpha[leave];
        let theta = self.xb[leave].max(0.0) / ar;
        for i in 0..m {
            if i != leave {
                self.xb[i] -= theta * alpha[i];
                if self.xb[i] < 0.0 && self.xb[i] > -self.feas_tol {
                    self.xb[i] = 0.0;
                }
            }
        }
        self.xb[leave] = theta;
        self.eta_update(leave, alpha);
        self.position[self.basis[leave]] = None;
        self.basis[leave] = enter;
        self.position[enter] = Some(leave);
        self.iterations += 1;
        self.since_refactor += 1;
        theta
    }

    fn step(&mut self, cost: &[f64], allow_artificial: bool, bland: bool) -> Result<(Step, f64), LpError> {
        let Some((enter, d)) = self.price(cost, allow_artificial, bland) else {
            return Ok((Step::Optimal, 0.0));
        };
        let alpha = self.ftran(enter);
        let Some(leave) = self.ratio_test(&alpha, bland) else {
            return Ok((Step::Unbounded, 0.0));
        };
        let theta = self.pivot(enter, leave, &alpha);
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
            self.compute_duals(cost);
        } else {
            // new row `leave` of the inverse carries the whole dual change
            let m = self.m;
            for c in 0..m {
                self.duals[c] += d * self.binv[c * m + leave];
            }
        }
        Ok((Step::Pivoted, theta))
    }

    /// Iterates to optimality for `cost`, certifying on a fresh factorization.
    fn optimize(&mut self, cost: &[f64], allow_artificial: bool) -> Result<Step, LpError> {
        self.compute_duals(cost);
        let mut rounds = 0;
        let mut degenerate = 0;
        loop {
            if self.iterations >= self.limit {
                return Err(LpError::IterationLimit(self.limit));
            }
            let bland = degenerate >= DEGENERATE_RUN;
            match self.step(cost, allow_artificial, bland)? {
                (Step::Pivoted, theta) => {
                    degenerate = if theta <= 1e-12 { degenerate + 1 } else { 0 };
                }
                (Step::Unbounded, _) => return Ok(Step::Unbounded),
                (Step::Optimal, _) => {
                    self.refactor()?;
                    self.compute_duals(cost);
                    if self.price(cost, allow_artificial, false).is_none() {
                        return Ok(Step::Optimal);
                    }
                    rounds += 1;
                    if rounds > CERTIFY_ROUNDS {
                        return Err(LpError::Numerical("reduced costs do not settle".into()));
                    }
                }
            }
        }
    }

    /// Pivots basic artificials (all at zero) out for any structural or
    /// surplus column with a usable entry in their row.
    fn expel_artificials(&mut self) -> Result<(), LpError> {
        let m = self.m;
        for r in 0..m {
            if self.sf.kind[self.basis[r]] != ColumnKind::Artificial {
                continue;
            }
            let row: Vec<f64> = (0..m).map(|c| self.binv[c * m + r]).collect();
            let candidate = (0..self.sf.cols.len())
                .filter(|&j| self.eligible(j, false))
                .map(|j| (j, self.sf.cols.dot(j, &row)))
                .filter(|(_, v)| v.abs() > 1e-7)
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()));
            if let Some((j, _)) = candidate {
                let alpha = self.ftran(j);
                // degenerate exchange: the artificial sits at zero
                self.xb[r] = 0.0;
                self.eta_update(r, &alpha);
                self.position[self.basis[r]] = None;
                self.basis[r] = j;
                self.position[j] = Some(r);
            }
        }
        self.refactor()
    }

    fn values(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.sf.cols.len()];
        for (r, &j) in self.basis.iter().enumerate() {
            v[j] = self.xb[r].max(0.0);
        }
        v
    }
}

pub fn run(sf: &StandardForm, feas_tol: f64) -> Result<Outcome, LpError> {
    let mut t = Tableau::new(sf, feas_tol)?;
    let has_artificial = sf.kind.contains(&ColumnKind::Artificial);
    if has_artificial {
        let phase1: Vec<f64> =
            sf.kind.iter().map(|k| if *k == ColumnKind::Artificial { 1.0 } else { 0.0 }).collect();
        if let Step::Unbounded = t.optimize(&phase1, true)? {
            return Err(LpError::Numerical("phase one reported unbounded".into()));
        }
        let infeasibility: f64 = t
            .basis
            .iter()
            .zip(&t.xb)
            .filter(|(j, _)| sf.kind[**j] == ColumnKind::Artificial)
            .map(|(_, x)| x.max(0.0))
            .sum();
        let rhs_scale = sf.rhs.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        if infeasibility > feas_tol * rhs_scale {
            return Ok(Outcome { status: LpStatus::Infeasible, values: t.values(), iterations: t.iterations });
        }
        t.expel_artificials()?;
    }
    let status = match t.optimize(&sf.cost, false)? {
        Step::Unbounded => LpStatus::Unbounded,
        _ => LpStatus::Optimal,
    };
    Ok(Outcome { status, values: t.values(), iterations: t.iterations })
}
