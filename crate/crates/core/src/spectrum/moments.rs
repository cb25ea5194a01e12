//! Unbiased estimators of population spectral moments.

use nalgebra::DMatrix;

use super::{SampleSpectrum, SpectrumError};

/// First four population moments from the sample eigenvalues, corrected for
/// the dimension-to-sample ratio. Requires `n ≥ 7` for positive correction
/// factors.
pub fn tian_moments(spec: &SampleSpectrum) -> Result<[f64; 4], SpectrumError> {
    let n = spec.n();
    if n < 7 {
        return Err(SpectrumError::Input(format!("moment corrections need n ≥ 7, got {n}")));
    }
    let nf = n as f64;
    let t2 = spec.ratio();
    let t4 = t2 * t2;
    let [x1, x2, x3, x4] = [1, 2, 3, 4].map(|k| spec.raw_moment(k));
    let c2 = nf * nf / ((nf - 1.0) * (nf + 2.0));
    let c3 = c2 * nf * nf / ((nf - 2.0) * (nf + 4.0));
    let poly = nf * nf + nf + 2.0;
    let c4 = c3 * nf * poly / ((nf - 3.0) * (nf + 1.0) * (nf + 6.0));
    let z2 = c2 * (x2 - t2 * x1 * x1);
    let z3 = c3 * (x3 - 3.0 * t2 * x2 * x1 + 2.0 * t4 * x1.powi(3));
    let z4 = c4
        * (x4 - 4.0 * t2 * x3 * x1 - t2 * x2 * x2 * (2.0 * nf * nf + 3.0 * nf - 6.0) / poly
            + t4 * x1 * x1 * (2.0 * x2 - t2 * x1 * x1) * (5.0 * nf * nf + 6.0 * nf) / poly);
    Ok([x1, z2, z3, z4])
}

/// First `count` population moments from U-statistic-type traces of the
/// `n × n` Gram matrix `S̃ = ηηᵀ/n`: `ζ̃ₖ = nᵏ/C(n,k) · tr(G̃ᵏ⁻¹ S̃) / p1`,
/// with `G̃` the strict upper triangle of `S̃`.
pub fn kong_moments(eta: &DMatrix<f64>, count: usize) -> Result<Vec<f64>, SpectrumError> {
    let (n, p1) = eta.shape();
    if count == 0 || count > n || p1 == 0 {
        return Err(SpectrumError::Input(format!("need 1 ≤ moments ≤ n = {n} and p1 ≥ 1, got {count}")));
    }
    let gram = eta * eta.transpose() / n as f64;
    let upper = DMatrix::from_fn(n, n, |i, j| if j > i { gram[(i, j)] } else { 0.0 });
    let mut power = gram.clone();
    let mut out = Vec::with_capacity(count);
    for k in 1..=count {
        if k > 1 {
            power = &upper * &power;
        }
        // nᵏ / C(n, k) = k! · Π_{i<k} n / (n − i)
        let factor: f64 = (0..k).map(|i| (i + 1) as f64 * n as f64 / (n - i) as f64).product();
        out.push(factor * power.trace() / p1 as f64);
    }
    Ok(out)
}
