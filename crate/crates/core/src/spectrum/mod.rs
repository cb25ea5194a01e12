//! Population spectrum estimation from a sample covariance.
//!
//! The Marčenko–Pastur equation links the Stieltjes transform of the
//! empirical spectral distribution of `Sₙ = ηᵀη / n` to the population
//! spectrum. Discretizing the population spectrum on a grid turns the
//! equation at a set of complex probes into an L1 fit, optionally tied to
//! unbiased moment estimates ([`estimate_spectrum_mplp`]). A cheaper route
//! matches grid moments to moment estimates alone
//! ([`estimate_spectrum_mpmo`]). Either model yields a largest-eigenvalue
//! estimate as its `p1/(p1+1)` quantile.

mod moments;
mod mplp;
mod mpmo;


use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::symmetric_eigenvalues;
use crate::lp::LpError;

pub use moments::{kong_moments, tian_moments};
pub use mplp::{build_mp_lp, estimate_spectrum_mplp, ProbePoints};
pub use mpmo::{estimate_spectrum_mpmo, mpmo_on_support};

/// Negative eigenvalues down to this are rounding and clamp to zero.
const NEGATIVE_CLAMP: f64 = -1e-10;

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("Stieltjes transform needs Im z > 0, got {0}")]
    Domain(Complex64),
    #[error("probe {probe} is singular for the support after {attempts} draws")]
    SingularProbe { probe: usize, attempts: usize },
    #[error("no feasible weights even with only the mass constraint")]
    Infeasible,
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Eigenvalues of `Sₙ` (ascending) with the sample size and dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSpectrum {
    eigenvalues: Vec<f64>,
    n: usize,
}

impl SampleSpectrum {
    pub fn new(mut eigenvalues: Vec<f64>, n: usize) -> Result<Self, SpectrumError> {
        if n == 0 || eigenvalues.is_empty() {
            return Err(SpectrumError::Input("need n ≥ 1 and at least one eigenvalue".into()));
        }
        if eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(SpectrumError::Input("non-finite eigenvalue".into()));
        }
        for v in &mut eigenvalues {
            if *v < 0.0 {
                if *v < NEGATIVE_CLAMP {
                    return Err(SpectrumError::Input(format!("eigenvalue {v} is not PSD rounding")));
                }
                *v = 0.0;
            }
        }
        eigenvalues.sort_by(f64::total_cmp);
        Ok(SampleSpectrum { eigenvalues, n })
    }

    /// Spectrum of `ηᵀη / n` for an `n × p1` residual matrix. When `p1 > n`
    /// the `n × n` Gram matrix supplies the nonzero eigenvalues.
    pub fn from_residuals(eta: &DMatrix<f64>) -> Result<Self, SpectrumError> {
        let (n, p1) = eta.shape();
        if n == 0 || p1 == 0 {
            return Err(SpectrumError::Input("empty residual matrix".into()));
        }
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(SpectrumError::Input("non-finite residual".into()));
        }
        let scale = 1.0 / n as f64;
        let eig = if p1 <= n {
            symmetric_eigenvalues(eta.tr_mul(eta) * scale)
        } else {
            let mut ev = symmetric_eigenvalues(eta * eta.transpose() * scale);
            ev.extend(std::iter::repeat_n(0.0, p1 - n));
            ev
        };
        SampleSpectrum::new(eig, n)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p1(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `τₙ² = p1 / n`.
    pub fn ratio(&self) -> f64 {
        self.p1() as f64 / self.n as f64
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().expect("nonempty")
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// `ξ̂ₖ`, the k-th moment of the empirical spectral distribution.
    pub fn raw_moment(&self, k: i32) -> f64 {
        self.eigenvalues.iter().map(|v| v.powi(k)).sum::<f64>() / self.p1() as f64
    }

    /// Grid interval `[a, b]` with `b = λmax` and
    /// `a = min(λmin/λmax, λmin)`; the second term only matters when
    /// `λmax < 1`, where the ratio would overshoot `b`.
    pub fn support_interval(&self) -> Result<(f64, f64), SpectrumError> {
        let b = self.lambda_max();
        if b <= 0.0 {
            return Err(SpectrumError::Input("all sample eigenvalues are zero".into()));
        }
        let lo = self.lambda_min();
        Ok(((lo / b).min(lo), b))
    }

    /// `count` equally spaced points on the support interval.
    pub fn support_grid(&self, count: usize) -> Result<Vec<f64>, SpectrumError> {
        let (a, b) = self.support_interval()?;
        Ok(match count {
            0 => return Err(SpectrumError::Input("empty support grid".into())),
            1 => vec![b],
            _ => (0..count).map(|j| a + (b - a) * j as f64 / (count - 1) as f64).collect(),
        })
    }
}

/// Empirical Stieltjes transform
/// `m̲(z) = −(1 − p1/n)/z + (1/n) Σᵢ 1/(λᵢ − z)`.
pub fn stieltjes_empirical(spec: &SampleSpectrum, z: Complex64) -> Result<Complex64, SpectrumError> {
    if !(z.im > 0.0) {
        return Err(SpectrumError::Domain(z));
    }
    let n = spec.n as f64;
    let resolvent: Complex64 = spec.eigenvalues.iter().map(|&l| (Complex64::new(l, 0.0) - z).inv()).sum();
    Ok(-(1.0 - spec.ratio()) / z + resolvent / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumMethod {
    Mplp,
    Mpmo,
    Naive,
}

/// Discrete population spectrum: weights on an ascending support grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    pub support: Vec<f64>,
    pub weights: Vec<f64>,
    /// Orders of the moment constraints that were enforced.
    pub moments_used: Vec<usize>,
    pub method: SpectrumMethod,
}

impl SpectralModel {
    /// Clamps solver round-off: weights ≥ 0 summing to one.
    fn from_raw(support: Vec<f64>, raw: &[f64], moments_used: Vec<usize>, method: SpectrumMethod) -> Self {
        let clipped: Vec<f64> = raw.iter().map(|w| w.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        let weights = if total > 0.0 {
            clipped.iter().map(|w| w / total).collect()
        } else {
            vec![1.0 / raw.len() as f64; raw.len()]
        };
        SpectralModel { support, weights, moments_used, method }
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().zip(&self.weights).map(|(t, w)| t * w).sum()
    }

    /// Total weight on `[lo, hi]`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        self.support.iter().zip(&self.weights).filter(|(t, _)| **t >= lo && **t <= hi).map(|(_, w)| w).sum()
    }
}

/// Smallest support point whose cumulative weight reaches `p1 / (p1 + 1)`.
pub fn lambda_max_from_model(model: &SpectralModel, p1: usize) -> f64 {
    let threshold = p1 as f64 / (p1 as f64 + 1.0);
    let mut cumulative = 0.0;
    for (t, w) in model.support.iter().zip(&model.weights) {
        cumulative += w;
        if cumulative >= threshold - 1e-12 {
            return *t;
        }
    }
    *model.support.last().expect("nonempty support")
}

/// `(1 + τₙ)⁻² λmax(Sₙ)`: undoes the Marčenko–Pastur edge inflation for an
/// identity-like spectrum. Not consistent in general.
pub fn lambda_max_naive(spec: &SampleSpectrum) -> f64 {
    spec.lambda_max() / (1.0 + spec.ratio().sqrt()).powi(2)
}
