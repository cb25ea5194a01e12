//! Relevant-difference testing for high-dimensional linear regression.
//!
//! The crate tests `H0: ‖β‖ ≤ δ₀` for the coefficient block of interest in
//! `y = xᵀβ + zᵀγ + ε` when both `x` and the controls `z` are
//! high-dimensional. The statistic is a projected U-statistic shifted by
//! `δ₀² λ̂²max(Σ_η)`, where the largest population eigenvalue of the
//! projection residuals is recovered from the sample spectrum by inverting
//! the Marčenko–Pastur equation. The same test decides which source
//! datasets are transferable to a target regression.
//!
//! Modules, bottom-up:
//!
//! - [`lasso`]: coordinate-descent Lasso, multi-response projection fits, CV.
//! - [`lp`]: dense two-phase revised simplex and L1-fit compilation.
//! - [`spectrum`]: Stieltjes transforms, moment estimators, spectral LPs.
//! - [`hdtrd`]: the relevance test (HDTRD).
//! - [`transfer`]: per-source transferability tests and the unified
//!   transfer estimator (TUTrans).
//! - [`sim`]: synthetic scenarios and Monte Carlo harness.
//! - [`cli`]: command-line front end.

pub mod cli;
pub mod hdtrd;
pub mod lasso;
pub mod linalg;
pub mod lp;
pub mod rng;
pub mod sim;
pub mod spectrum;
pub mod transfer;
