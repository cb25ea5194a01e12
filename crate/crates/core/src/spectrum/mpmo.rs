//! Spectrum estimation by moment matching alone.

use nalgebra::{DMatrix, DVector};

use super::{kong_moments, SampleSpectrum, SpectralModel, SpectrumError, SpectrumMethod};
use crate::lp::solve_l1_fit;

/// Weights on `jt` equally spaced support points minimizing
/// `Σᵢ |Σⱼ wⱼ tⱼⁱ − ζ̃ᵢ|` over the simplex, for the first `count` moment
/// estimates.
pub fn estimate_spectrum_mpmo(eta: &DMatrix<f64>, jt: usize, count: usize) -> Result<SpectralModel, SpectrumError> {
    if jt == 0 {
        return Err(SpectrumError::Input("empty support grid".into()));
    }
    let spec = SampleSpectrum::from_residuals(eta)?;
    let support = spec.support_grid(jt)?;
    mpmo_on_support(eta, support, count)
}

/// Moment matching on a caller-chosen ascending support. Row `i` of the
/// fit is scaled by `t_max⁻ⁱ` so that all rows are O(1).
pub fn mpmo_on_support(eta: &DMatrix<f64>, support: Vec<f64>, count: usize) -> Result<SpectralModel, SpectrumError> {
    if count == 0 {
        return Err(SpectrumError::Input("need at least one moment".into()));
    }
    if support.is_empty() || support.windows(2).any(|w| w[1] < w[0]) || support.iter().any(|t| !t.is_finite()) {
        return Err(SpectrumError::Input("support must be nonempty, finite and ascending".into()));
    }
    let jt = support.len();
    if jt == 1 {
        return Ok(SpectralModel::from_raw(support, &[1.0], Vec::new(), SpectrumMethod::Mpmo));
    }
    let zeta = kong_moments(eta, count)?;
    let top = support[jt - 1].abs().max(f64::MIN_POSITIVE);
    let design = DMatrix::from_fn(count, jt, |i, j| (support[j] / top).powi(i as i32 + 1));
    let target = DVector::from_fn(count, |i, _| zeta[i] / top.powi(i as i32 + 1));
    let fit = solve_l1_fit(&design, &target, &DMatrix::from_element(1, jt, 1.0), &DVector::from_element(1, 1.0))?;
    Ok(SpectralModel::from_raw(support, fit.weights.as_slice(), (1..=count).collect(), SpectrumMethod::Mpmo))
}
