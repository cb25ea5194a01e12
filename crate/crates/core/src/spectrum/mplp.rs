//! Spectrum estimation by inverting the discretized Marčenko–Pastur
//! equation at complex probes, tied to unbiased moment estimates.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use super::{stieltjes_empirical, tian_moments, SampleSpectrum, SpectralModel, SpectrumError, SpectrumMethod};
use crate::lp::{l1_fit_program, solve_lp, LinearProgram, LpError, LpStatus, DEFAULT_FEAS_TOL};
use crate::rng::stream_rng;

const SINGULAR_DENOMINATOR: f64 = 1e-12;
const MAX_DRAWS: usize = 10;

/// Probes `z_k = u_k + i/√n` in the upper half plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbePoints {
    pub z_values: Vec<Complex64>,
    pub u_seed: u64,
}

fn smallest_denominator(spec: &SampleSpectrum, support: &[f64], z: Complex64) -> Result<f64, SpectrumError> {
    let m = stieltjes_empirical(spec, z)?;
    Ok(support.iter().map(|&t| (1.0 + t * m).norm()).fold(f64::INFINITY, f64::min))
}

impl ProbePoints {
    /// Draws `count` probes with standard normal real parts. A probe whose
    /// denominator `1 + t m̲(z)` nearly vanishes at some support point is
    /// redrawn, up to ten draws in total.
    pub fn draw(spec: &SampleSpectrum, support: &[f64], count: usize, seed: u64) -> Result<Self, SpectrumError> {
        let mut rng = stream_rng(seed, 0x9B0E);
        let height = 1.0 / (spec.n() as f64).sqrt();
        let mut z_values = Vec::with_capacity(count);
        for probe in 0..count {
            let mut accepted = None;
            for _ in 0..MAX_DRAWS {
                let u: f64 = StandardNormal.sample(&mut rng);
                let z = Complex64::new(u, height);
                if smallest_denominator(spec, support, z)? >= SINGULAR_DENOMINATOR {
                    accepted = Some(z);
                    break;
                }
            }
            z_values.push(accepted.ok_or(SpectrumError::SingularProbe { probe, attempts: MAX_DRAWS })?);
        }
        Ok(ProbePoints { z_values, u_seed: seed })
    }
}

/// Equation data at the probes: `x_z` stacks real then imaginary parts of
/// `(p1 t_j / n) / (1 + t_j m̲(z_k))`, `y_z` those of `z_k + 1/m̲(z_k)`.
fn probe_system(
    spec: &SampleSpectrum,
    probes: &ProbePoints,
    support: &[f64],
) -> Result<(DMatrix<f64>, DVector<f64>), SpectrumError> {
    let jz = probes.z_values.len();
    let ratio = spec.ratio();
    let mut x = DMatrix::zeros(2 * jz, support.len());
    let mut y = DVector::zeros(2 * jz);
    for (k, &z) in probes.z_values.iter().enumerate() {
        let m = stieltjes_empirical(spec, z)?;
        let lhs = z + m.inv();
        y[k] = lhs.re;
        y[jz + k] = lhs.im;
        for (j, &t) in support.iter().enumerate() {
            let denom = 1.0 + t * m;
            if denom.norm() < SINGULAR_DENOMINATOR {
                return Err(SpectrumError::SingularProbe { probe: k, attempts: 1 });
            }
            let v = ratio * t / denom;
            x[(k, j)] = v.re;
            x[(jz + k, j)] = v.im;
        }
    }
    Ok((x, y))
}

fn check_support(support: &[f64]) -> Result<(), SpectrumError> {
    if support.is_empty() || support.windows(2).any(|w| w[1] < w[0]) || support.iter().any(|t| !t.is_finite()) {
        return Err(SpectrumError::Input("support must be nonempty, finite and ascending".into()));
    }
    Ok(())
}

/// Vandermonde rows `t^0 .. t^(orders.len())` on the support.
fn moment_rows(support: &[f64], orders: usize) -> DMatrix<f64> {
    DMatrix::from_fn(orders + 1, support.len(), |i, j| support[j].powi(i as i32))
}

/// The L1 program over `(w, w̃)`: `min Σ w̃` subject to `A w = (1, ζ̂)` and
/// `[−x_z I; x_z I](w, w̃) ≥ (−y_z, y_z)`, `w, w̃ ≥ 0`. Equality rows cover
/// the mass and then as many moments as `moments` holds.
pub fn build_mp_lp(
    spec: &SampleSpectrum,
    probes: &ProbePoints,
    support: &[f64],
    moments: &[f64],
) -> Result<LinearProgram, SpectrumError> {
    check_support(support)?;
    if probes.z_values.iter().any(|z| !(z.im > 0.0)) {
        return Err(SpectrumError::Input("probes must lie in the upper half plane".into()));
    }
    let (x, y) = probe_system(spec, probes, support)?;
    let eq = moment_rows(support, moments.len());
    let rhs = DVector::from_iterator(moments.len() + 1, std::iter::once(1.0).chain(moments.iter().copied()));
    Ok(l1_fit_program(&x, &y, &eq, &rhs)?)
}

/// Whether some `w ≥ 0` on the support has unit mass and the given moments.
fn moments_attainable(support: &[f64], moments: &[f64]) -> Result<bool, SpectrumError> {
    let eq = moment_rows(support, moments.len());
    let rhs = DVector::from_iterator(moments.len() + 1, std::iter::once(1.0).chain(moments.iter().copied()));
    let lp = LinearProgram::new(DVector::zeros(support.len())).with_eq(eq, rhs);
    Ok(solve_lp(&lp, DEFAULT_FEAS_TOL)?.status == LpStatus::Optimal)
}

/// Weights on `jt` equally spaced support points from `jz` probes.
///
/// All four moment constraints are tried first; while they admit no
/// distribution on the grid the highest remaining moment is dropped.
/// Attainability only involves the equality block, so it is settled on that
/// block alone before the full program is solved.
pub fn estimate_spectrum_mplp(
    spec: &SampleSpectrum,
    jt: usize,
    jz: usize,
    seed: u64,
) -> Result<SpectralModel, SpectrumError> {
    if jt < 2 || jz <= jt {
        return Err(SpectrumError::Input(format!("need probes > grid points ≥ 2, got jt = {jt}, jz = {jz}")));
    }
    let support = spec.support_grid(jt)?;
    let probes = ProbePoints::draw(spec, &support, jz, seed)?;
    let zeta = tian_moments(spec)?;
    for used in (0..=4).rev() {
        if !moments_attainable(&support, &zeta[..used])? {
            continue;
        }
        let lp = build_mp_lp(spec, &probes, &support, &zeta[..used])?;
        let sol = solve_lp(&lp, DEFAULT_FEAS_TOL)?;
        match sol.status {
            LpStatus::Optimal => {
                let raw: Vec<f64> = sol.x.iter().take(jt).copied().collect();
                return Ok(SpectralModel::from_raw(support, &raw, (1..=used).collect(), SpectrumMethod::Mplp));
            }
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => return Err(LpError::Numerical("L1 program unbounded".into()).into()),
        }
    }
    Err(SpectrumError::Infeasible)
}
