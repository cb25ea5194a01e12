//! Synthetic scenarios and the Monte Carlo harness.
//!
//! Covariates are Gaussian with AR(1) covariance `Σᵢⱼ = ρ^|i−j|`; the first
//! half of the columns is tested and the second half controls. Noise is
//! standard normal. Replication `r` of a scenario draws everything from
//! stream `r` of the scenario seed, so replications can run in any order.


use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::hdtrd::{project_and_residualize, Dataset, EigMethod, HdtrdError, TestConfig, TestReport, TestStatistics};
use crate::lasso::LambdaChoice;
use crate::linalg::symmetric_eigenvalues;
use crate::rng::{derive_seed, stream_rng};
use crate::transfer::{
    baseline_pooled_test_with, build_contrast_paired, source_test_unprojected_with, source_test_with, tutrans_with,
    MultiSourceData, Sample, TransferConfig, TransferError,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Input(String),
    #[error(transparent)]
    Test(#[from] HdtrdError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
}

/// `n × p` rows with `Σᵢⱼ = ρ^|i−j|`, by the recursion
/// `u_j = ρ u_{j−1} + √(1−ρ²) e_j`.
pub fn ar1_cholesky_sample(n: usize, p: usize, rho: f64, seed: u64) -> Result<DMatrix<f64>, SimError> {
    check_rho(rho)?;
    Ok(ar1_rows(n, p, rho, &mut stream_rng(seed, 0)))
}

fn check_rho(rho: f64) -> Result<(), SimError> {
    if !(rho.abs() < 1.0) {
        return Err(SimError::Input(format!("|rho| must be < 1, got {rho}")));
    }
    Ok(())
}

fn ar1_rows<R: Rng + ?Sized>(n: usize, p: usize, rho: f64, rng: &mut R) -> DMatrix<f64> {
    let innov = (1.0 - rho * rho).sqrt();
    let mut m = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut prev = 0.0;
        for j in 0..p {
            let e: f64 = StandardNormal.sample(rng);
            prev = if j == 0 { e } else { rho * prev + innov * e };
            m[(i, j)] = prev;
        }
    }
    m
}

fn normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

pub fn ar1_covariance(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sparsity {
    /// Five nonzero coefficients.
    Point,
    /// Half of the tested coefficients are nonzero.
    Proportional,
}

impl fmt::Display for Sparsity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sparsity::Point => "point",
            Sparsity::Proportional => "prop",
        })
    }
}

impl FromStr for Sparsity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "point" => Ok(Sparsity::Point),
            "prop" | "proportional" => Ok(Sparsity::Proportional),
            _ => Err(format!("unknown sparsity `{s}` (point or prop)")),
        }
    }
}

/// One testing experiment: `‖β‖ = κ + δ₀` spread evenly over the first `s`
/// tested coefficients, with `δ₀ = c₀ √(ln p / n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n: usize,
    /// Total covariates; the first `p / 2` are tested.
    pub p: usize,
    pub rho: f64,
    pub sparsity: Sparsity,
    pub kappa: f64,
    pub c0: f64,
    /// Nonzero control coefficients as `(index, value)`; indices past the
    /// control block are ignored.
    pub gamma: Vec<(usize, f64)>,
    pub reps: usize,
    pub seed: u64,
    pub alpha: f64,
    pub test: TestConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n: 200,
            p: 300,
            rho: 0.6,
            sparsity: Sparsity::Point,
            kappa: 0.0,
            c0: 0.5,
            gamma: vec![(0, 3.0), (1, 1.5), (4, 2.0)],
            reps: 500,
            seed: 1,
            alpha: 0.05,
            test: TestConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        check_rho(self.rho)?;
        if self.n < 4 {
            return Err(SimError::Input(format!("n must be at least 4, got {}", self.n)));
        }
        if self.p < 2 {
            return Err(SimError::Input(format!("p must be at least 2, got {}", self.p)));
        }
        if self.reps == 0 {
            return Err(SimError::Input("reps must be at least 1".into()));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite() && self.c0 >= 0.0 && self.c0.is_finite()) {
            return Err(SimError::Input("kappa and c0 must be finite and ≥ 0".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(SimError::Input(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn p1(&self) -> usize {
        self.p / 2
    }

    pub fn p2(&self) -> usize {
        self.p - self.p1()
    }

    pub fn delta0(&self) -> f64 {
        crate::transfer::transfer_level(self.c0, self.p, self.n)
    }

    pub fn support_size(&self) -> usize {
        match self.sparsity {
            Sparsity::Point => 5.min(self.p1()),
            Sparsity::Proportional => (self.p1() / 2).max(1),
        }
    }

    pub fn beta(&self) -> DVector<f64> {
        let s = self.support_size();
        let each = (self.kappa + self.delta0()) / (s as f64).sqrt();
        DVector::from_fn(self.p1(), |j, _| if j < s { each } else { 0.0 })
    }

    pub fn gamma_vec(&self) -> DVector<f64> {
        let mut g = DVector::zeros(self.p2());
        for &(j, v) in &self.gamma {
            if j < g.len() {
                g[j] = v;
            }
        }
        g
    }

    /// `λmax(Σ_x − Σ_xz Σ_z⁻¹ Σ_zx)` for the scenario's covariance.
    pub fn true_lambda_max(&self) -> f64 {
        let sigma = ar1_covariance(self.p, self.rho);
        let (p1, p2) = (self.p1(), self.p2());
        let sx = sigma.view((0, 0), (p1, p1)).into_owned();
        let sxz = sigma.view((0, p1), (p1, p2)).into_owned();
        let sz = sigma.view((p1, p1), (p2, p2)).into_owned();
        let solved = Cholesky::new(sz).expect("AR(1) covariance is positive definite").solve(&sxz.transpose());
        let eta = sx - &sxz * solved;
        let eta = (&eta + eta.transpose()) * 0.5;
        *symmetric_eigenvalues(eta).last().expect("p1 ≥ 1")
    }

    /// `Fixed` at the true eigenvalue, the oracle variant of the test.
    pub fn oracle_method(&self) -> EigMethod {
        EigMethod::Fixed(self.true_lambda_max())
    }
}

/// Replication `rep` of the scenario.
pub fn make_test_dataset(cfg: &ScenarioConfig, rep: u64) -> Result<Dataset, SimError> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, rep);
    let w = ar1_rows(cfg.n, cfg.p, cfg.rho, &mut rng);
    let eps = normal_vec(cfg.n, &mut rng);
    let p1 = cfg.p1();
    let x = w.columns(0, p1).into_owned();
    let z = w.columns(p1, cfg.p2()).into_owned();
    let y = &x * cfg.beta() + &z * cfg.gamma_vec() + eps;
    Ok(Dataset::new(y, x, z)?)
}

/// Equality compares every float bit for bit and ignores `runtime`, so
/// identical runs compare equal even with failed replications.
#[derive(Debug, Clone)]
pub struct McSummary {
    /// The eigenvalue method or test variant that produced the p-values.
    pub label: String,
    /// Rejections over the replications that produced a p-value.
    pub rejection_rate: f64,
    /// `√(r(1 − r) / reps)` over the same replications.
    pub mc_se: f64,
    /// NaN where the replication failed.
    pub per_rep_pvalues: Vec<f64>,
    pub failures: usize,
    /// Wall-clock time of the whole run; the only field that varies between
    /// identical runs.
    pub runtime: Duration,
}

impl PartialEq for McSummary {
    fn eq(&self, other: &Self) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        self.label == other.label
            && self.rejection_rate.to_bits() == other.rejection_rate.to_bits()
            && self.mc_se.to_bits() == other.mc_se.to_bits()
            && bits(&self.per_rep_pvalues) == bits(&other.per_rep_pvalues)
            && self.failures == other.failures
    }
}

impl McSummary {
    fn from_pvalues(label: String, pvalues: Vec<f64>, alpha: f64, runtime: Duration) -> Self {
        let ok: Vec<f64> = pvalues.iter().copied().filter(|p| !p.is_nan()).collect();
        let failures = pvalues.len() - ok.len();
        let (rate, se) = if ok.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let r = ok.iter().filter(|&&p| p < alpha).count() as f64 / ok.len() as f64;
            (r, (r * (1.0 - r) / ok.len() as f64).sqrt())
        };
        McSummary { label, rejection_rate: rate, mc_se: se, per_rep_pvalues: pvalues, failures, runtime }
    }
}

/// Rejection rate of the test at `cfg.alpha`, with `δ₀` from the scenario.
pub fn run_type1_power(cfg: &ScenarioConfig, eig_method: EigMethod) -> Result<McSummary, SimError> {
    Ok(run_type1_power_multi(cfg, &[eig_method])?.remove(0))
}

/// Several eigenvalue methods on the same replications; the projection is
/// fitted once per replication and shared.
pub fn run_type1_power_multi(cfg: &ScenarioConfig, methods: &[EigMethod]) -> Result<Vec<McSummary>, SimError> {
    cfg.validate()?;
    let start = Instant::now();
    let delta0 = cfg.delta0();
    let per_rep: Vec<Vec<f64>> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|rep| replicate_pvalues(cfg, methods, delta0, rep).unwrap_or_else(|_| vec![f64::NAN; methods.len()]))
        .collect();
    let runtime = start.elapsed();
    Ok(methods
        .iter()
        .enumerate()
        .map(|(m, &method)| {
            let pvalues = per_rep.iter().map(|row| row[m]).collect();
            McSummary::from_pvalues(method.to_string(), pvalues, cfg.alpha, runtime)
        })
        .collect())
}

fn replicate_pvalues(cfg: &ScenarioConfig, methods: &[EigMethod], delta0: f64, rep: u64) -> Result<Vec<f64>, SimError> {
    let data = make_test_dataset(cfg, rep)?;
    let proj = project_and_residualize(&data, cfg.test.lambda_gamma, cfg.test.lambda_w)?;
    let seed = derive_seed(cfg.seed, rep);
    Ok(methods
        .iter()
        .map(|&m| match TestStatistics::compute(&proj.eta_hat, &proj.resid, m, &cfg.test.spectrum, seed) {
            Ok(stats) => stats.report(delta0, cfg.alpha).p_value,
            Err(_) => f64::NAN,
        })
        .collect())
}

/// Kolmogorov–Smirnov distance between the finite p-values and Uniform(0, 1).
pub fn ks_uniform(pvalues: &[f64]) -> f64 {
    let mut v: Vec<f64> = pvalues.iter().copied().filter(|p| !p.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &p)| ((i + 1) as f64 / n - p).max(p - i as f64 / n))
        .fold(0.0, f64::max)
}

/// A transfer-learning experiment. The target coefficient has `s` entries
/// of size `signal`; source `k` moves it by `distances[k]` in ℓ2 norm,
/// spread over `shift_support` random coordinates with random signs.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferScenario {
    pub n0: usize,
    pub nk: usize,
    pub p: usize,
    pub rho: f64,
    pub s: usize,
    pub signal: f64,
    pub distances: Vec<f64>,
    pub shift_support: usize,
    pub c0: f64,
    pub alpha: f64,
    pub eig_method: EigMethod,
    pub reps: usize,
    pub seed: u64,
    pub config: TransferConfig,
}

impl Default for TransferScenario {
    fn default() -> Self {
        TransferScenario {
            n0: 150,
            nk: 200,
            p: 200,
            rho: 0.5,
            s: 10,
            signal: 0.5,
            distances: vec![0.0; 4],
            shift_support: 5,
            c0: 3.0,
            alpha: 0.05,
            eig_method: EigMethod::Mpmo,
            reps: 50,
            seed: 1,
            config: TransferConfig::default(),
        }
    }
}

impl TransferScenario {
    pub fn validate(&self) -> Result<(), SimError> {
        check_rho(self.rho)?;
        if self.n0 < 4 || self.nk < 4 || self.p == 0 || self.reps == 0 {
            return Err(SimError::Input("need n0, nk ≥ 4, p ≥ 1 and reps ≥ 1".into()));
        }
        if self.s > self.p || self.shift_support == 0 || self.shift_support > self.p {
            return Err(SimError::Input("support sizes must lie in 1..=p".into()));
        }
        if self.distances.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(SimError::Input("distances must be finite and ≥ 0".into()));
        }
        Ok(())
    }

    pub fn delta0(&self) -> f64 {
        crate::transfer::transfer_level(self.c0, self.p, self.n0)
    }

    pub fn beta0(&self) -> DVector<f64> {
        DVector::from_fn(self.p, |j, _| if j < self.s { self.signal } else { 0.0 })
    }

    /// `λmax` of the projection-residual covariance of a contrast. Target and
    /// source share `Σ`, so the source covariates regress on the differenced
    /// ones with coefficient `−1/2` and the residual covariance is `Σ / 2`.
    pub fn contrast_lambda_max(&self) -> f64 {
        0.5 * *symmetric_eigenvalues(ar1_covariance(self.p, self.rho)).last().expect("p ≥ 1")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferDraw {
    pub data: MultiSourceData,
    pub beta0: DVector<f64>,
    pub source_betas: Vec<DVector<f64>>,
}

/// Replication `rep` of the scenario.
pub fn make_transfer_data(scn: &TransferScenario, rep: u64) -> Result<TransferDraw, SimError> {
    scn.validate()?;
    let mut rng = stream_rng(scn.seed, rep);
    let beta0 = scn.beta0();
    let draw = |n: usize, beta: &DVector<f64>, rng: &mut rand_chacha::ChaCha8Rng| -> Sample {
        let x = ar1_rows(n, scn.p, scn.rho, rng);
        let y = &x * beta + normal_vec(n, rng);
        Sample { y, x }
    };
    let target = draw(scn.n0, &beta0, &mut rng);
    let mut sources = Vec::with_capacity(scn.distances.len());
    let mut source_betas = Vec::with_capacity(scn.distances.len());
    for &d in &scn.distances {
        let coords = rand::seq::index::sample(&mut rng, scn.p, scn.shift_support);
        let each = d / (scn.shift_support as f64).sqrt();
        let mut beta = beta0.clone();
        for j in coords.iter() {
            beta[j] += if rng.random::<bool>() { each } else { -each };
        }
        sources.push(draw(scn.nk, &beta, &mut rng));
        source_betas.push(beta);
    }
    Ok(TransferDraw { data: MultiSourceData::new(target, sources)?, beta0, source_betas })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransferMethod {
    /// Lasso on the target alone.
    TargetOnly,
    /// Stacked fit over every source, no testing.
    PoolAll,
    /// Stacked fit over the sources that pass the transferability test.
    Tutrans,
}

impl fmt::Display for TransferMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransferMethod::TargetOnly => "target-only",
            TransferMethod::PoolAll => "pool-all",
            TransferMethod::Tutrans => "tutrans",
        })
    }
}

/// Per-method results over the replications.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferRow {
    pub method: TransferMethod,
    /// `‖β̂₀ − β₀‖`; NaN where the replication failed.
    pub estimation_errors: Vec<f64>,
    /// `(β̂₀ − β₀)ᵀ Σ (β̂₀ − β₀)`, the excess prediction risk on a fresh
    /// target row.
    pub prediction_errors: Vec<f64>,
    /// Number of sources used.
    pub sources_used: Vec<usize>,
    pub failures: usize,
}

impl TransferRow {
    pub fn median_estimation_error(&self) -> f64 {
        median(&self.estimation_errors)
    }

    pub fn median_prediction_error(&self) -> f64 {
        median(&self.prediction_errors)
    }
}

/// Median of the non-NaN entries.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn run_transfer_experiment(scn: &TransferScenario, methods: &[TransferMethod]) -> Result<Vec<TransferRow>, SimError> {
    scn.validate()?;
    let sigma = ar1_covariance(scn.p, scn.rho);
    let delta0 = scn.delta0();
    let per_rep: Vec<Vec<Option<(f64, f64, usize)>>> = (0..scn.reps as u64)
        .into_par_iter()
        .map(|rep| {
            let Ok(TransferDraw { data: msd, beta0, .. }) = make_transfer_data(scn, rep) else {
                return vec![None; methods.len()];
            };
            let seed = derive_seed(scn.seed, rep);
            methods
                .iter()
                .map(|&m| {
                    let (beta, used) = match m {
                        TransferMethod::TargetOnly => (fit_with(&msd, &[], scn.config.lambda_unified, &scn.config)?, 0),
                        TransferMethod::PoolAll => {
                            let all: Vec<usize> = (0..msd.n_sources()).collect();
                            (fit_with(&msd, &all, scn.config.lambda_unified, &scn.config)?, all.len())
                        }
                        TransferMethod::Tutrans => {
                            let r = tutrans_with(&msd, &scn.config, delta0, scn.alpha, scn.eig_method, seed).ok()?;
                            let used = r.selected.len();
                            (r.beta0_hat, used)
                        }
                    };
                    let err = &beta - &beta0;
                    Some((err.norm(), err.dot(&(&sigma * &err)), used))
                })
                .collect()
        })
        .collect();
    Ok(methods
        .iter()
        .enumerate()
        .map(|(m, &method)| {
            let cells: Vec<Option<(f64, f64, usize)>> = per_rep.iter().map(|row| row[m]).collect();
            TransferRow {
                method,
                estimation_errors: cells.iter().map(|c| c.map_or(f64::NAN, |c| c.0)).collect(),
                prediction_errors: cells.iter().map(|c| c.map_or(f64::NAN, |c| c.1)).collect(),
                sources_used: cells.iter().map(|c| c.map_or(0, |c| c.2)).collect(),
                failures: cells.iter().filter(|c| c.is_none()).count(),
            }
        })
        .collect())
}

fn fit_with(msd: &MultiSourceData, selected: &[usize], lambda: LambdaChoice, config: &TransferConfig) -> Option<DVector<f64>> {
    crate::transfer::fit_unified_with(msd, selected, lambda, config.max_design_entries).ok().map(|f| f.beta0)
}

/// Rejection rates of the single-source tests on the first source of every
/// replication.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTestSummary {
    /// Projected test at the scenario's transfer level.
    pub projected: McSummary,
    /// Classic test with the raw source covariates.
    pub unprojected: McSummary,
    /// Classic test after a pooled target-and-source fit.
    pub pooled: McSummary,
}

pub fn run_source_tests(scn: &TransferScenario) -> Result<SourceTestSummary, SimError> {
    scn.validate()?;
    if scn.distances.is_empty() {
        return Err(SimError::Input("the scenario has no source".into()));
    }
    let start = Instant::now();
    let delta0 = scn.delta0();
    let per_rep: Vec<[f64; 3]> = (0..scn.reps as u64)
        .into_par_iter()
        .map(|rep| {
            let Ok(draw) = make_transfer_data(scn, rep) else {
                return [f64::NAN; 3];
            };
            let (target, source) = (&draw.data.target, &draw.data.sources[0]);
            let Ok(cd) = build_contrast_paired(target, source, scn.config.pairing) else {
                return [f64::NAN; 3];
            };
            let seed = derive_seed(scn.seed, rep);
            let p = |r: Result<TestReport, HdtrdError>| r.map_or(f64::NAN, |r| r.p_value);
            [
                p(source_test_with(&cd, &scn.config, delta0, scn.alpha, scn.eig_method, seed)),
                p(source_test_unprojected_with(&cd, &scn.config, scn.alpha)),
                baseline_pooled_test_with(target, source, &scn.config, scn.alpha).map_or(f64::NAN, |r| r.p_value),
            ]
        })
        .collect();
    let runtime = start.elapsed();
    let column = |i: usize, label: String| {
        McSummary::from_pvalues(label, per_rep.iter().map(|r| r[i]).collect(), scn.alpha, runtime)
    };
    Ok(SourceTestSummary {
        projected: column(0, format!("projected:{}", scn.eig_method)),
        unprojected: column(1, "unprojected".into()),
        pooled: column(2, "pooled".into()),
    })
}
