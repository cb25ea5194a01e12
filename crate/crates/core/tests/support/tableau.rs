//! Textbook dense-tableau two-phase simplex with Bland's rule.
//!
//! Deliberately naive and independent of the library solver: every row gets
//! an artificial, no scaling, no crash basis, no factorization.

#![allow(dead_code)]

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

pub struct OracleResult {
    pub status: OracleStatus,
    pub objective: f64,
    pub x: Vec<f64>,
}

const EPS: f64 = 1e-10;

/// `min cᵀx` s.t. `eq·x = eq_rhs`, `ge·x ≥ ge_rhs`, `x_j ≥ 0` where `nonneg[j]`.
pub fn solve(
    cost: &[f64],
    eq: &[Vec<f64>],
    eq_rhs: &[f64],
    ge: &[Vec<f64>],
    ge_rhs: &[f64],
    nonneg: &[bool],
) -> OracleResult {
    let m = cost.len();
    // columns: x⁺ (m), x⁻ (m, zero for nonneg vars), surplus (|ge|), artificial (rows)
    let rows = eq.len() + ge.len();
    let ns = ge.len();
    let n_real = 2 * m + ns;
    let width = n_real + rows + 1;
    let mut t = vec![vec![0.0; width]; rows];
    for (i, (a, &b)) in eq.iter().zip(eq_rhs).chain(ge.iter().zip(ge_rhs)).enumerate() {
        for j in 0..m {
            t[i][j] = a[j];
            if !nonneg[j] {
                t[i][m + j] = -a[j];
            }
        }
        if i >= eq.len() {
            t[i][2 * m + (i - eq.len())] = -1.0;
        }
        t[i][width - 1] = b;
        if b < 0.0 {
            t[i].iter_mut().for_each(|v| *v = -*v);
        }
        t[i][n_real + i] = 1.0;
    }
    let mut basis: Vec<usize> = (0..rows).map(|i| n_real + i).collect();
    let mut allowed = vec![true; width - 1];
    for j in 0..m {
        if nonneg[j] {
            allowed[m + j] = false;
        }
    }

    let phase1: Vec<f64> = (0..width - 1).map(|j| if j >= n_real { 1.0 } else { 0.0 }).collect();
    if run(&mut t, &mut basis, &phase1, &allowed) == OracleStatus::Unbounded {
        unreachable!("phase one is bounded below");
    }
    let infeas: f64 = basis.iter().enumerate().filter(|(_, &b)| b >= n_real).map(|(i, _)| t[i][width - 1]).sum();
    if infeas > 1e-8 {
        return OracleResult { status: OracleStatus::Infeasible, objective: f64::NAN, x: vec![] };
    }
    // drive artificials out or drop their (redundant) rows
    let mut i = 0;
    while i < basis.len() {
        if basis[i] >= n_real {
            if let Some(j) = (0..n_real).find(|&j| allowed[j] && t[i][j].abs() > 1e-9) {
                pivot(&mut t, &mut basis, i, j);
            } else {
                t.remove(i);
                basis.remove(i);
                continue;
            }
        }
        i += 1;
    }
    for a in allowed.iter_mut().skip(n_real) {
        *a = false;
    }
    let mut phase2 = vec![0.0; width - 1];
    for j in 0..m {
        phase2[j] = cost[j];
        phase2[m + j] = -cost[j];
    }
    let status = run(&mut t, &mut basis, &phase2, &allowed);
    if status == OracleStatus::Unbounded {
        return OracleResult { status, objective: f64::NEG_INFINITY, x: vec![] };
    }
    let mut full = vec![0.0; width - 1];
    for (i, &b) in basis.iter().enumerate() {
        full[b] = t[i][width - 1];
    }
    let x: Vec<f64> = (0..m).map(|j| full[j] - full[m + j]).collect();
    let objective = x.iter().zip(cost).map(|(a, b)| a * b).sum();
    OracleResult { status: OracleStatus::Optimal, objective, x }
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, c: usize) {
    let p = t[r][c];
    t[r].iter_mut().for_each(|v| *v /= p);
    let prow = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i != r {
            let f = row[c];
            if f != 0.0 {
                row.iter_mut().zip(&prow).for_each(|(v, pv)| *v -= f * pv);
            }
        }
    }
    basis[r] = c;
}

fn run(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], allowed: &[bool]) -> OracleStatus {
    let width = cost.len() + 1;
    for _ in 0..100_000 {
        // Bland: lowest-index column with negative reduced cost
        let enter = (0..width - 1).find(|&j| {
            if !allowed[j] || basis.contains(&j) {
                return false;
            }
            let d = cost[j] - basis.iter().enumerate().map(|(i, &b)| cost[b] * t[i][j]).sum::<f64>();
            d < -EPS
        });
        let Some(c) = enter else { return OracleStatus::Optimal };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..t.len() {
            if t[i][c] > EPS {
                let ratio = t[i][width - 1] / t[i][c];
                let better = match leave {
                    None => true,
                    Some((r, best)) => ratio < best - EPS || ((ratio - best).abs() <= EPS && basis[i] < basis[r]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((r, _)) = leave else { return OracleStatus::Unbounded };
        pivot(t, basis, r, c);
    }
    panic!("oracle did not terminate");
}
