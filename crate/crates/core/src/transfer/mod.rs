//! Transferability detection and the unified transfer estimator.
//!
//! A source is compared with the target through the differenced model
//!
//! ```text
//! y₀ᵢ − y_kᵢ = x_kᵢᵀ(β₀ − β_k) + (x₀ᵢ − x_kᵢ)ᵀβ₀ + (ε₀ᵢ − ε_kᵢ)
//! ```
//!
//! which puts the contrast on the source covariates and leaves the
//! differenced covariates as controls. The relevant-difference test then
//! asks whether `‖β_k − β₀‖ ≤ δ₀`; sources that pass are pooled with the
//! target in one stacked Lasso whose first block estimates `β₀`.
//!
//! Source indices are zero-based throughout; messages print them one-based.

#[cfg(test)]
mod tests;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use thiserror::Error;

use crate::hdtrd::{
    u_statistic, validate_level, variance_estimate, EigMethod, HdtrdError, SpectrumSettings, TestReport,
    TestStatistics,
};
use crate::lasso::{
    lasso_fit, multi_lasso_fit, resolve_lambda, resolve_shared_lambda, LambdaChoice, LassoError, LassoProblem,
    DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::linalg::{all_finite, select_entries, select_rows};
use crate::rng::{fold_assignment, stream_rng};

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("source {}: {source}", .index + 1)]
    Source {
        index: usize,
        #[source]
        source: HdtrdError,
    },
    #[error("stacked design would hold {entries} entries, above the cap of {cap}")]
    TooLarge { entries: usize, cap: usize },
    #[error(transparent)]
    Lasso(#[from] LassoError),
    #[error(transparent)]
    Test(#[from] HdtrdError),
}

/// One regression dataset: response and covariates on the same rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
}

impl Sample {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>) -> Result<Self, TransferError> {
        if x.nrows() != y.len() {
            return Err(TransferError::Input(format!("response has {} rows, covariates {}", y.len(), x.nrows())));
        }
        if !all_finite(y.as_slice()) || !all_finite(x.as_slice()) {
            return Err(TransferError::Input("non-finite value".into()));
        }
        Ok(Sample { y, x })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    fn rows(&self, idx: &[usize]) -> Sample {
        Sample { y: select_entries(&self.y, idx), x: select_rows(&self.x, idx) }
    }
}

/// A target dataset and any number of sources over the same `p` covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSourceData {
    pub target: Sample,
    pub sources: Vec<Sample>,
}

impl MultiSourceData {
    pub fn new(target: Sample, sources: Vec<Sample>) -> Result<Self, TransferError> {
        let p = target.p();
        if p == 0 {
            return Err(TransferError::Input("no covariates".into()));
        }
        if target.n() < 4 {
            return Err(TransferError::Input(format!("target needs at least 4 rows, got {}", target.n())));
        }
        for (k, s) in sources.iter().enumerate() {
            if s.p() != p {
                return Err(TransferError::Input(format!("source {} has {} covariates, target {p}", k + 1, s.p())));
            }
            if s.n() < 4 {
                return Err(TransferError::Input(format!("source {} needs at least 4 rows, got {}", k + 1, s.n())));
            }
        }
        Ok(MultiSourceData { target, sources })
    }

    pub fn p(&self) -> usize {
        self.target.p()
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }
}

/// The differenced target/source pair over `min(n₀, n_k)` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastData {
    /// `y₀ᵢ − y_kᵢ`
    pub y0k: DVector<f64>,
    /// `x₀ᵢ − x_kᵢ`
    pub x0k: DMatrix<f64>,
    /// `x_kᵢ`
    pub xk: DMatrix<f64>,
}

impl ContrastData {
    pub fn n(&self) -> usize {
        self.y0k.len()
    }
}

/// Which target row is differenced against which source row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pairing {
    /// Row `i` with row `i`; the surplus rows of the longer dataset are
    /// dropped.
    #[default]
    InOrder,
    /// Both datasets are shuffled by the seed before pairing in order.
    Shuffled { seed: u64 },
}

pub fn build_contrast(target: &Sample, source: &Sample) -> Result<ContrastData, TransferError> {
    build_contrast_paired(target, source, Pairing::InOrder)
}

pub fn build_contrast_paired(target: &Sample, source: &Sample, pairing: Pairing) -> Result<ContrastData, TransferError> {
    if target.p() != source.p() {
        return Err(TransferError::Input(format!(
            "target has {} covariates, source {}",
            target.p(),
            source.p()
        )));
    }
    let m = target.n().min(source.n());
    let (ti, si): (Vec<usize>, Vec<usize>) = match pairing {
        Pairing::InOrder => ((0..m).collect(), (0..m).collect()),
        Pairing::Shuffled { seed } => {
            let mut t: Vec<usize> = (0..target.n()).collect();
            let mut s: Vec<usize> = (0..source.n()).collect();
            t.shuffle(&mut stream_rng(seed, 0));
            s.shuffle(&mut stream_rng(seed, 1));
            (t[..m].to_vec(), s[..m].to_vec())
        }
    };
    let xk = select_rows(&source.x, &si);
    Ok(ContrastData {
        y0k: select_entries(&target.y, &ti) - select_entries(&source.y, &si),
        x0k: select_rows(&target.x, &ti) - &xk,
        xk,
    })
}

/// Penalty choices and limits shared by the transfer procedures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferConfig {
    /// Initial target coefficient on the contrast rows, and the pooled fit of
    /// the baseline test.
    pub lambda_init: LambdaChoice,
    /// Projection of the source covariates onto the differenced ones.
    pub lambda_w: LambdaChoice,
    /// The stacked estimator.
    pub lambda_unified: LambdaChoice,
    pub spectrum: SpectrumSettings,
    pub pairing: Pairing,
    /// Largest number of entries the stacked design may hold.
    pub max_design_entries: usize,
}

pub const DEFAULT_MAX_DESIGN_ENTRIES: usize = 50_000_000;

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            lambda_init: LambdaChoice::default(),
            lambda_w: LambdaChoice::default(),
            lambda_unified: LambdaChoice::default(),
            spectrum: SpectrumSettings::default(),
            pairing: Pairing::InOrder,
            max_design_entries: DEFAULT_MAX_DESIGN_ENTRIES,
        }
    }
}

fn check_contrast_rows(cd: &ContrastData) -> Result<(), LassoError> {
    if cd.n() < 2 {
        return Err(LassoError::Input(format!("contrast needs at least 2 rows, got {}", cd.n())));
    }
    Ok(())
}

/// Lasso of the differenced response on the differenced covariates.
pub fn contrast_initial_beta(cd: &ContrastData, lambda: LambdaChoice) -> Result<DVector<f64>, LassoError> {
    check_contrast_rows(cd)?;
    let l = resolve_lambda(&cd.x0k, &cd.y0k, lambda)?;
    Ok(lasso_fit(&LassoProblem::new(&cd.x0k, &cd.y0k, l), DEFAULT_TOL, DEFAULT_MAX_ITER)?.coef)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceProjection {
    /// `p × p`; row `j` regresses source covariate `j` on the differenced
    /// covariates.
    pub h: DMatrix<f64>,
    /// `x_kᵢ − Ĥ x₀ₖᵢ`, `ň × p`.
    pub eta: DMatrix<f64>,
}

pub fn source_projection(cd: &ContrastData, lambda_w: LambdaChoice) -> Result<SourceProjection, LassoError> {
    check_contrast_rows(cd)?;
    let l = resolve_shared_lambda(&cd.xk, &cd.x0k, lambda_w)?;
    let h = multi_lasso_fit(&cd.xk, &cd.x0k, l, DEFAULT_TOL)?.h_matrix;
    let eta = &cd.xk - &cd.x0k * h.transpose();
    Ok(SourceProjection { h, eta })
}

/// The `δ₀`-free part of the projected source test.
pub fn source_statistics(
    cd: &ContrastData,
    config: &TransferConfig,
    eig_method: EigMethod,
    seed: u64,
) -> Result<TestStatistics, HdtrdError> {
    let beta = contrast_initial_beta(cd, config.lambda_init)?;
    let resid = &cd.y0k - &cd.x0k * beta;
    // zero residuals make the variance vanish whatever the projection
    if resid.iter().all(|&r| r == 0.0) {
        return Err(HdtrdError::Degenerate);
    }
    let proj = source_projection(cd, config.lambda_w)?;
    if proj.eta.norm() <= 1e-6 * cd.xk.norm() {
        return Err(HdtrdError::Degenerate);
    }
    TestStatistics::compute(&proj.eta, &resid, eig_method, &config.spectrum, seed)
}

/// Tests `‖β_k − β₀‖ ≤ delta0` on one contrast.
pub fn source_test(
    cd: &ContrastData,
    delta0: f64,
    alpha: f64,
    eig_method: EigMethod,
    seed: u64,
) -> Result<TestReport, HdtrdError> {
    source_test_with(cd, &TransferConfig::default(), delta0, alpha, eig_method, seed)
}

pub fn source_test_with(
    cd: &ContrastData,
    config: &TransferConfig,
    delta0: f64,
    alpha: f64,
    eig_method: EigMethod,
    seed: u64,
) -> Result<TestReport, HdtrdError> {
    validate_level(delta0, alpha)?;
    Ok(source_statistics(cd, config, eig_method, seed)?.report(delta0, alpha))
}

/// Classic (`δ₀ = 0`) decision from covariates and residuals, with no
/// eigenvalue needed.
fn classic_report(cov: &DMatrix<f64>, resid: &DVector<f64>, alpha: f64) -> Result<TestReport, HdtrdError> {
    validate_level(0.0, alpha)?;
    let t_proj = u_statistic(cov, resid)?;
    let var_hat = variance_estimate(cov, resid)?.max(0.0);
    if var_hat == 0.0 {
        return Err(HdtrdError::Degenerate);
    }
    let stats = TestStatistics { n: cov.nrows(), t_proj, var_hat, lambda_max_sq: 0.0, eig_method: EigMethod::Fixed(0.0) };
    Ok(stats.report(0.0, alpha))
}

/// The contrast test without projection: the raw source covariates stand in
/// for the residualized ones and `δ₀ = 0`.
pub fn source_test_unprojected(cd: &ContrastData, alpha: f64) -> Result<TestReport, HdtrdError> {
    source_test_unprojected_with(cd, &TransferConfig::default(), alpha)
}

pub fn source_test_unprojected_with(cd: &ContrastData, config: &TransferConfig, alpha: f64) -> Result<TestReport, HdtrdError> {
    let beta = contrast_initial_beta(cd, config.lambda_init)?;
    let resid = &cd.y0k - &cd.x0k * beta;
    classic_report(&cd.xk, &resid, alpha)
}

/// Baseline test: the target coefficient is fitted on the pooled target and
/// source rows, and the classic statistic runs over the source rows alone.
pub fn baseline_pooled_test(target: &Sample, source: &Sample, alpha: f64) -> Result<TestReport, TransferError> {
    baseline_pooled_test_with(target, source, &TransferConfig::default(), alpha)
}

pub fn baseline_pooled_test_with(
    target: &Sample,
    source: &Sample,
    config: &TransferConfig,
    alpha: f64,
) -> Result<TestReport, TransferError> {
    if target.p() != source.p() {
        return Err(TransferError::Input(format!(
            "target has {} covariates, source {}",
            target.p(),
            source.p()
        )));
    }
    let (x, y) = stack(&[target, source]);
    let l = resolve_lambda(&x, &y, config.lambda_init)?;
    let beta = lasso_fit(&LassoProblem::new(&x, &y, l), DEFAULT_TOL, DEFAULT_MAX_ITER)?.coef;
    let resid = &source.y - &source.x * beta;
    Ok(classic_report(&source.x, &resid, alpha)?)
}

fn stack(parts: &[&Sample]) -> (DMatrix<f64>, DVector<f64>) {
    let n: usize = parts.iter().map(|s| s.n()).sum();
    let p = parts[0].p();
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let mut at = 0;
    for s in parts {
        x.rows_mut(at, s.n()).copy_from(&s.x);
        y.rows_mut(at, s.n()).copy_from(&s.y);
        at += s.n();
    }
    (x, y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnifiedFit {
    pub beta0: DVector<f64>,
    /// `β_k − β₀` estimates, one per selected source in ascending order.
    pub contrasts: Vec<DVector<f64>>,
    pub selected: Vec<usize>,
    pub lambda: f64,
}

fn normalize_selection(selected: &[usize], k: usize) -> Result<Vec<usize>, TransferError> {
    let mut sel = selected.to_vec();
    sel.sort_unstable();
    sel.dedup();
    if let Some(&bad) = sel.iter().find(|&&s| s >= k) {
        return Err(TransferError::Input(format!("selected source {} out of range 1..={k}", bad + 1)));
    }
    Ok(sel)
}

/// Stacked design over the target and the selected sources: the first block
/// column carries every dataset, and each selected source also fills its own
/// diagonal block.
pub fn stacked_design(
    msd: &MultiSourceData,
    selected: &[usize],
    max_entries: usize,
) -> Result<(DMatrix<f64>, DVector<f64>), TransferError> {
    let sel = normalize_selection(selected, msd.n_sources())?;
    let p = msd.p();
    let rows = msd.target.n() + sel.iter().map(|&k| msd.sources[k].n()).sum::<usize>();
    let cols = p * (sel.len() + 1);
    let entries = rows.saturating_mul(cols);
    if entries > max_entries {
        return Err(TransferError::TooLarge { entries, cap: max_entries });
    }
    let mut x = DMatrix::zeros(rows, cols);
    let mut y = DVector::zeros(rows);
    let n0 = msd.target.n();
    x.view_mut((0, 0), (n0, p)).copy_from(&msd.target.x);
    y.rows_mut(0, n0).copy_from(&msd.target.y);
    let mut at = n0;
    for (block, &k) in sel.iter().enumerate() {
        let s = &msd.sources[k];
        x.view_mut((at, 0), (s.n(), p)).copy_from(&s.x);
        x.view_mut((at, p * (block + 1)), (s.n(), p)).copy_from(&s.x);
        y.rows_mut(at, s.n()).copy_from(&s.y);
        at += s.n();
    }
    Ok((x, y))
}

/// Lasso on the stacked model with one penalty on every block. With nothing
/// selected this is the target-only Lasso.
pub fn fit_unified(msd: &MultiSourceData, selected: &[usize], lambda: LambdaChoice) -> Result<UnifiedFit, TransferError> {
    fit_unified_with(msd, selected, lambda, DEFAULT_MAX_DESIGN_ENTRIES)
}

pub fn fit_unified_with(
    msd: &MultiSourceData,
    selected: &[usize],
    lambda: LambdaChoice,
    max_entries: usize,
) -> Result<UnifiedFit, TransferError> {
    let sel = normalize_selection(selected, msd.n_sources())?;
    let (x, y) = stacked_design(msd, &sel, max_entries)?;
    let l = resolve_lambda(&x, &y, lambda)?;
    let coef = lasso_fit(&LassoProblem::new(&x, &y, l), DEFAULT_TOL, DEFAULT_MAX_ITER)?.coef;
    let p = msd.p();
    Ok(UnifiedFit {
        beta0: coef.rows(0, p).into_owned(),
        contrasts: (1..=sel.len()).map(|b| coef.rows(b * p, p).into_owned()).collect(),
        selected: sel,
        lambda: l,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferReport {
    /// Sources judged transferable, ascending.
    pub selected: Vec<usize>,
    pub beta0_hat: DVector<f64>,
    pub per_source: Vec<TestReport>,
    pub delta0: f64,
    /// Set when `delta0` came from a cross-validated rate constant.
    pub c0: Option<f64>,
    pub lambda: f64,
}

/// `c₀ √(ln p / n)`.
pub fn transfer_level(c0: f64, p: usize, n: usize) -> f64 {
    c0 * ((p as f64).ln() / n as f64).sqrt()
}

/// Per-source statistics in source order; `None` marks a degenerate
/// source. Every source uses the same seed, so reordering the sources only
/// reorders the output.
pub fn per_source_statistics(
    msd: &MultiSourceData,
    config: &TransferConfig,
    eig_method: EigMethod,
    seed: u64,
) -> Result<Vec<Option<TestStatistics>>, TransferError> {
    let results: Vec<Result<Option<TestStatistics>, HdtrdError>> = msd
        .sources
        .par_iter()
        .map(|source| {
            let cd = build_contrast_paired(&msd.target, source, config.pairing)
                .map_err(|e| HdtrdError::Input(e.to_string()))?;
            match source_statistics(&cd, config, eig_method, seed) {
                Ok(s) => Ok(Some(s)),
                Err(HdtrdError::Degenerate) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| r.map_err(|source| TransferError::Source { index, source }))
        .collect()
}

fn decide(
    stats: &[Option<TestStatistics>],
    delta0: f64,
    alpha: f64,
    eig_method: EigMethod,
) -> (Vec<TestReport>, Vec<usize>) {
    let reports: Vec<TestReport> = stats
        .iter()
        .map(|s| match s {
            Some(s) => s.report(delta0, alpha),
            None => TestReport::degenerate(delta0, alpha, eig_method),
        })
        .collect();
    let selected = reports.iter().enumerate().filter(|(_, r)| r.p_value > alpha).map(|(k, _)| k).collect();
    (reports, selected)
}

/// Tests every source at transfer level `delta0`, then fits the stacked
/// model on the target and the sources that were not rejected.
pub fn tutrans(
    msd: &MultiSourceData,
    delta0: f64,
    alpha: f64,
    eig_method: EigMethod,
    seed: u64,
) -> Result<TransferReport, TransferError> {
    tutrans_with(msd, &TransferConfig::default(), delta0, alpha, eig_method, seed)
}

pub fn tutrans_with(
    msd: &MultiSourceData,
    config: &TransferConfig,
    delta0: f64,
    alpha: f64,
    eig_method: EigMethod,
    seed: u64,
) -> Result<TransferReport, TransferError> {
    validate_level(delta0, alpha)?;
    let stats = per_source_statistics(msd, config, eig_method, seed)?;
    let (per_source, selected) = decide(&stats, delta0, alpha, eig_method);
    let fit = fit_unified_with(msd, &selected, config.lambda_unified, config.max_design_entries)?;
    Ok(TransferReport { selected, beta0_hat: fit.beta0, per_source, delta0, c0: None, lambda: fit.lambda })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaCv {
    pub best_c0: f64,
    /// Pooled held-out mean squared error per grid entry.
    pub cv_errors: Vec<f64>,
}

/// Chooses `δ₀ = c₀ √(ln p / n₀)` from `c0_grid` by K-fold cross-validation
/// over the target rows; sources are always used whole. Ties go to the
/// smaller `c₀`.
pub fn cv_delta0(
    msd: &MultiSourceData,
    c0_grid: &[f64],
    folds: usize,
    alpha: f64,
    eig_method: EigMethod,
    seed: u64,
) -> Result<DeltaCv, TransferError> {
    cv_delta0_with(msd, &TransferConfig::default(), c0_grid, folds, alpha, eig_method, seed)
}

pub fn cv_delta0_with(
    msd: &MultiSourceData,
    config: &TransferConfig,
    c0_grid: &[f64],
    folds: usize,
    alpha: f64,
    eig_method: EigMethod,
    seed: u64,
) -> Result<DeltaCv, TransferError> {
    validate_level(0.0, alpha)?;
    if c0_grid.is_empty() {
        return Err(TransferError::Input("empty c0 grid".into()));
    }
    if c0_grid.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
        return Err(TransferError::Input("c0 grid entries must be finite and ≥ 0".into()));
    }
    let n0 = msd.target.n();
    if folds < 2 {
        return Err(TransferError::Input(format!("need at least 2 folds, got {folds}")));
    }
    if folds > n0 || n0 - n0.div_ceil(folds) < 4 {
        return Err(TransferError::Input(format!(
            "{n0} target rows leave too few training rows for {folds} folds (need at least 4)"
        )));
    }
    let levels: Vec<f64> = c0_grid.iter().map(|&c| transfer_level(c, msd.p(), n0)).collect();
    let assign = fold_assignment(n0, folds, seed);
    let mut sse = vec![0.0; c0_grid.len()];
    for fold in 0..folds {
        let train: Vec<usize> = (0..n0).filter(|&i| assign[i] != fold).collect();
        let test: Vec<usize> = (0..n0).filter(|&i| assign[i] == fold).collect();
        let split = MultiSourceData { target: msd.target.rows(&train), sources: msd.sources.clone() };
        let held_out = msd.target.rows(&test);
        let stats = per_source_statistics(&split, config, eig_method, seed)?;
        let mut cache: HashMap<Vec<usize>, f64> = HashMap::new();
        for (g, &delta0) in levels.iter().enumerate() {
            let (_, selected) = decide(&stats, delta0, alpha, eig_method);
            let err = match cache.get(&selected) {
                Some(&e) => e,
                None => {
                    let fit = fit_unified_with(&split, &selected, config.lambda_unified, config.max_design_entries)?;
                    let e = (&held_out.y - &held_out.x * &fit.beta0).norm_squared();
                    cache.insert(selected, e);
                    e
                }
            };
            sse[g] += err;
        }
    }
    let cv_errors: Vec<f64> = sse.iter().map(|s| s / n0 as f64).collect();
    let mut best = 0;
    for g in 1..c0_grid.len() {
        let (e, c) = (cv_errors[g], c0_grid[g]);
        if e < cv_errors[best] || (e == cv_errors[best] && c < c0_grid[best]) {
            best = g;
        }
    }
    Ok(DeltaCv { best_c0: c0_grid[best], cv_errors })
}

/// [`cv_delta0_with`] followed by [`tutrans_with`] at the chosen level.
pub fn tutrans_cv_with(
    msd: &MultiSourceData,
    config: &TransferConfig,
    c0_grid: &[f64],
    folds: usize,
    alpha: f64,
    eig_method: EigMethod,
    seed: u64,
) -> Result<(TransferReport, DeltaCv), TransferError> {
    let cv = cv_delta0_with(msd, config, c0_grid, folds, alpha, eig_method, seed)?;
    let delta0 = transfer_level(cv.best_c0, msd.p(), msd.target.n());
    let mut report = tutrans_with(msd, config, delta0, alpha, eig_method, seed)?;
    report.c0 = Some(cv.best_c0);
    Ok((report, cv))
}
