//! Command-line front end.
//!
//! Every invocation ends with exactly one `status=` line on stdout, whatever
//! the outcome. Reports are `key=value` records, one record per line, with
//! `#` lines as a human summary. Nothing time- or path-dependent is written
//! to stdout or to report files, so equal inputs and seeds give
//! byte-identical output; runtimes go to stderr.

mod ingest;


pub use ingest::*;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::hdtrd::{hdtrd_test_with, EigMethod, HdtrdError, SpectrumSettings, TestConfig};
use crate::lasso::LassoError;
use crate::sim::{
    ks_uniform, run_transfer_experiment, run_type1_power_multi, ScenarioConfig, SimError, Sparsity, TransferMethod,
    TransferScenario,
};
use crate::spectrum::{
    estimate_spectrum_mplp, estimate_spectrum_mpmo, kong_moments, lambda_max_from_model, lambda_max_naive,
    tian_moments, SampleSpectrum, SpectralModel, SpectrumError,
};
use crate::transfer::{
    transfer_level, tutrans_cv_with, tutrans_with, MultiSourceData, Pairing, Sample, TransferConfig, TransferError,
};

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\n\n",
    "algorithm                                  module     subcommand\n",
    "relevant-difference test                   hdtrd      test\n",
    "projected U-statistic and its variance     hdtrd      test\n",
    "spectrum by MP equation plus moments       spectrum   spectrum --method mplp\n",
    "spectrum by moment matching                spectrum   spectrum --method mpmo\n",
    "largest sample eigenvalue                  spectrum   spectrum --method naive\n",
    "Lasso by coordinate descent                lasso      (used by test, transfer)\n",
    "simplex LP and L1 fit                      lp         (used by spectrum)\n",
    "per-source transferability test            transfer   transfer\n",
    "unified fit over the selected sources      transfer   transfer\n",
    "transfer level by cross-validation         transfer   transfer --cv-c0\n",
    "Monte Carlo size, power and transfer runs   sim        simulate\n",
);

#[derive(Debug, Parser)]
#[command(name = "hdtrd", version, long_version = LONG_VERSION, about = "Relevant-difference testing and transfer learning for high-dimensional regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test H0: ‖β‖ ≤ δ₀ for the tested block of a regression.
    Test(TestArgs),
    /// Estimate the population spectrum behind a residual matrix.
    Spectrum(SpectrumArgs),
    /// Select transferable sources and fit the target coefficient.
    Transfer(TransferArgs),
    /// Run a Monte Carlo experiment.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct SpectrumFlags {
    /// Support grid size.
    #[arg(long, default_value_t = 100, value_parser = min_count(2))]
    jt: usize,
    /// Number of complex probe points.
    #[arg(long, default_value_t = 200, value_parser = min_count(3))]
    jz: usize,
    /// Moments matched by the moment-only estimator.
    #[arg(long, default_value_t = 6, value_parser = min_count(1))]
    moments: usize,
}

impl SpectrumFlags {
    fn settings(&self) -> Result<SpectrumSettings, CliError> {
        if self.jz <= self.jt {
            return Err(CliError::Input(format!("--jz ({}) must exceed --jt ({})", self.jz, self.jt)));
        }
        Ok(SpectrumSettings { jt: self.jt, jz: self.jz, moments: self.moments })
    }
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("level").required(true).args(["delta0", "c0"])))]
struct TestArgs {
    /// CSV with header: y, then the p1 tested columns, then controls.
    #[arg(long)]
    data: PathBuf,
    /// Number of tested columns.
    #[arg(long, value_parser = min_count(1))]
    p1: usize,
    /// Null radius.
    #[arg(long, value_parser = non_negative)]
    delta0: Option<f64>,
    /// Null radius as c0·√(ln p / n), p counting all covariates.
    #[arg(long, value_parser = non_negative)]
    c0: Option<f64>,
    #[arg(long, default_value_t = 0.05, value_parser = unit_open)]
    alpha: f64,
    /// mplp, mpmo, naive or fixed:<value>.
    #[arg(long, default_value = "mplp", value_parser = parse_eig)]
    eig_method: EigMethod,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    spectrum: SpectrumFlags,
    /// Subtract column means before fitting.
    #[arg(long)]
    center: bool,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum SpectrumMethodArg {
    Mplp,
    Mpmo,
    Naive,
}

#[derive(Debug, Args)]
struct SpectrumArgs {
    /// CSV with header holding an n × p1 residual matrix.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = SpectrumMethodArg::Mplp)]
    method: SpectrumMethodArg,
    #[command(flatten)]
    spectrum: SpectrumFlags,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("level").required(true).args(["c0", "cv_c0"])))]
struct TransferArgs {
    /// Target CSV with header: y, then p covariates.
    #[arg(long)]
    target: PathBuf,
    /// Comma-separated source CSVs in the target's layout; may be empty.
    #[arg(long, value_delimiter = ',')]
    sources: Vec<PathBuf>,
    /// Transfer level δ₀ = c0·√(ln p / n₀).
    #[arg(long, value_parser = non_negative)]
    c0: Option<f64>,
    /// Grid for choosing c0 by cross-validation: `a..b` (integers) or a
    /// comma-separated list.
    #[arg(long, value_parser = parse_grid)]
    cv_c0: Option<Grid>,
    #[arg(long, default_value_t = 5, value_parser = min_count(2))]
    folds: usize,
    #[arg(long, default_value_t = 0.05, value_parser = unit_open)]
    alpha: f64,
    #[arg(long, default_value = "mplp", value_parser = parse_eig)]
    eig_method: EigMethod,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Shuffle rows with this seed before pairing target and source rows.
    #[arg(long)]
    pairing_seed: Option<u64>,
    #[command(flatten)]
    spectrum: SpectrumFlags,
    #[arg(long)]
    center: bool,
    /// Write the fitted target coefficient as CSV here instead of listing
    /// its nonzero entries in the report.
    #[arg(long)]
    beta_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum ScenarioArg {
    Type1,
    Power,
    Transfer,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    scenario: ScenarioArg,
    #[arg(long, default_value = "point", value_parser = parse_sparsity)]
    sparsity: Sparsity,
    /// Rows (target rows for `transfer`).
    #[arg(long, value_parser = min_count(4))]
    n: Option<usize>,
    /// Source rows for `transfer`.
    #[arg(long, value_parser = min_count(4))]
    nk: Option<usize>,
    #[arg(long, value_parser = min_count(2))]
    p: Option<usize>,
    #[arg(long, allow_hyphen_values = true, value_parser = correlation)]
    rho: Option<f64>,
    #[arg(long, value_parser = non_negative)]
    c0: Option<f64>,
    /// Excess norm over δ₀; `power` defaults to 0.3 and `type1` requires 0.
    #[arg(long, value_parser = non_negative)]
    kappa: Option<f64>,
    /// Distance of each source from the target coefficient (`transfer`).
    #[arg(long, value_delimiter = ',', value_parser = non_negative)]
    distances: Option<Vec<f64>>,
    #[arg(long, value_parser = min_count(1))]
    reps: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.05, value_parser = unit_open)]
    alpha: f64,
    /// Comma-separated methods; a bare `fixed` uses the true eigenvalue.
    #[arg(long, value_delimiter = ',')]
    eig_method: Vec<String>,
    /// Per-replication tidy CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rejection rate against κ as CSV, for `type1` and `power`.
    #[arg(long)]
    emit_curve: Option<PathBuf>,
    /// κ values of the curve.
    #[arg(long, value_delimiter = ',', value_parser = non_negative, default_value = "0,0.1,0.2,0.3,0.4,0.5")]
    curve_kappas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Grid(Vec<f64>);

fn min_count(min: usize) -> impl Fn(&str) -> Result<usize, String> + Clone + Send + Sync + 'static {
    move |s: &str| match s.parse::<usize>() {
        Ok(v) if v >= min => Ok(v),
        Ok(v) => Err(format!("must be at least {min}, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_float(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a finite number")),
    }
}

fn unit_open(s: &str) -> Result<f64, String> {
    let v = parse_float(s)?;
    if v > 0.0 && v < 1.0 { Ok(v) } else { Err(format!("must lie in (0, 1), got {v}")) }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v = parse_float(s)?;
    if v >= 0.0 { Ok(v) } else { Err(format!("must be ≥ 0, got {v}")) }
}

fn correlation(s: &str) -> Result<f64, String> {
    let v = parse_float(s)?;
    if v.abs() < 1.0 { Ok(v) } else { Err(format!("must lie in (−1, 1), got {v}")) }
}

fn parse_eig(s: &str) -> Result<EigMethod, String> {
    s.parse()
}

fn parse_sparsity(s: &str) -> Result<Sparsity, String> {
    s.parse()
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    let values = if let Some((a, b)) = s.split_once("..") {
        let lo: u32 = a.trim().parse().map_err(|_| format!("range start `{a}` is not an integer"))?;
        let hi: u32 = b.trim().parse().map_err(|_| format!("range end `{b}` is not an integer"))?;
        if hi < lo {
            return Err(format!("empty range {lo}..{hi}"));
        }
        (lo..=hi).map(f64::from).collect()
    } else {
        s.split(',').map(|t| non_negative(t.trim())).collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() {
        return Err("empty grid".into());
    }
    Ok(Grid(values))
}

/// Failure classes, one per exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Degenerate(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Degenerate(_) => 1,
            CliError::Input(_) => 2,
            CliError::Failure(_) => 3,
        }
    }

    fn status(&self) -> &'static str {
        match self {
            CliError::Degenerate(_) => "degenerate",
            CliError::Input(_) => "input-error",
            CliError::Failure(_) => "error",
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<LassoError> for CliError {
    fn from(e: LassoError) -> Self {
        match e {
            LassoError::Input(_) => CliError::Input(e.to_string()),
            _ => CliError::Failure(e.to_string()),
        }
    }
}

impl From<SpectrumError> for CliError {
    fn from(e: SpectrumError) -> Self {
        match e {
            SpectrumError::Input(_) => CliError::Input(e.to_string()),
            _ => CliError::Failure(e.to_string()),
        }
    }
}

impl From<HdtrdError> for CliError {
    fn from(e: HdtrdError) -> Self {
        match e {
            HdtrdError::Input(_) => CliError::Input(e.to_string()),
            HdtrdError::Degenerate => CliError::Degenerate(e.to_string()),
            HdtrdError::Lasso(l) => l.into(),
            HdtrdError::Spectrum(s) => s.into(),
        }
    }
}

impl From<TransferError> for CliError {
    fn from(e: TransferError) -> Self {
        match e {
            TransferError::Input(_) | TransferError::TooLarge { .. } => CliError::Input(e.to_string()),
            TransferError::Lasso(l) => l.into(),
            TransferError::Test(t) => t.into(),
            TransferError::Source { .. } => CliError::Failure(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Input(_) => CliError::Input(e.to_string()),
            SimError::Test(t) => t.into(),
            SimError::Transfer(t) => t.into(),
        }
    }
}

/// Entry point for the binary.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with_io(args, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs one invocation against the given streams and returns the exit code.
pub fn run_with_io<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    finish(out, Ok(()))
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    let text = e.render().to_string();
                    let reason = text.lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
                    finish(out, Err(CliError::Input(reason)))
                }
            };
        }
    };
    let result = match cli.command {
        Command::Test(a) => run_test(&a),
        Command::Spectrum(a) => run_spectrum(&a),
        Command::Transfer(a) => run_transfer(&a),
        Command::Simulate(a) => run_simulate(&a, err),
    };
    match result {
        Ok(report) => {
            let _ = out.write_all(report.as_bytes());
            finish(out, Ok(()))
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            finish(out, Err(e))
        }
    }
}

fn finish(out: &mut dyn Write, result: Result<(), CliError>) -> i32 {
    let code = match &result {
        Ok(()) => 0,
        Err(e) => e.exit_code(),
    };
    let line = match result {
        Ok(()) => "status=ok exit=0".to_string(),
        Err(e) => {
            let reason = e.to_string().replace(['\n', '\r'], " ");
            format!("status={} exit={code} reason={reason}", e.status())
        }
    };
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
    code
}

fn save(path: &Path, contents: &str) -> Result<(), CliError> {
    write_atomic(path, contents.as_bytes()).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn save_report(path: Option<&PathBuf>, report: &str) -> Result<(), CliError> {
    match path {
        Some(p) => save(p, report),
        None => Ok(()),
    }
}

fn run_test(a: &TestArgs) -> Result<String, CliError> {
    let settings = a.spectrum.settings()?;
    let data = match ingest_csv_with(&a.data, Layout::Test { p1: a.p1 }, a.center)? {
        Ingested::Test(d) => d,
        _ => unreachable!("test layout yields a dataset"),
    };
    let (n, p2) = (data.n(), data.p2());
    let delta0 = match (a.delta0, a.c0) {
        (Some(d), _) => d,
        (None, Some(c)) => transfer_level(c, a.p1 + p2, n),
        (None, None) => unreachable!("clap requires one of --delta0 and --c0"),
    };
    let config = TestConfig { spectrum: settings, ..TestConfig::default() };
    let r = hdtrd_test_with(&data, &config, delta0, a.alpha, a.eig_method, a.seed)?;

    let mut s = format!("command=test n={n} p1={} p2={p2} delta0={delta0}", a.p1);
    if let Some(c) = a.c0 {
        let _ = write!(s, " c0={c}");
    }
    let _ = writeln!(
        s,
        " alpha={} eig_method={} seed={} t_proj={} var_hat={} lambda_max_sq={} t_stat={} p_value={} reject={}",
        a.alpha, r.eig_method, a.seed, r.t_proj, r.var_hat, r.lambda_max_sq, r.t_stat, r.p_value, r.reject
    );
    let verdict = if r.reject { "rejected" } else { "not rejected" };
    let _ = writeln!(s, "# H0: ‖β‖ ≤ {delta0} {verdict} at level {} (p-value {:.4})", a.alpha, r.p_value);
    save_report(a.out.as_ref(), &s)?;
    Ok(s)
}

fn run_spectrum(a: &SpectrumArgs) -> Result<String, CliError> {
    let settings = a.spectrum.settings()?;
    let eta = match ingest_csv(&a.data, Layout::Matrix)? {
        Ingested::Matrix(m) => m,
        _ => unreachable!("matrix layout yields a matrix"),
    };
    let spec = SampleSpectrum::from_residuals(&eta)?;
    let p1 = spec.p1();
    let (method, model, moments): (&str, Option<SpectralModel>, Vec<f64>) = match a.method {
        SpectrumMethodArg::Naive => ("naive", None, Vec::new()),
        SpectrumMethodArg::Mplp => {
            let model = estimate_spectrum_mplp(&spec, settings.jt, settings.jz, a.seed)?;
            ("mplp", Some(model), tian_moments(&spec)?.to_vec())
        }
        SpectrumMethodArg::Mpmo => {
            let model = estimate_spectrum_mpmo(&eta, settings.jt, settings.moments)?;
            ("mpmo", Some(model), kong_moments(&eta, settings.moments)?)
        }
    };
    let lambda_max = match &model {
        Some(m) => lambda_max_from_model(m, p1),
        None => lambda_max_naive(&spec),
    };
    let requested = moments.len();
    let used = model.as_ref().map_or(0, |m| m.moments_used.len());
    let dropped: Vec<String> = (used + 1..=requested).map(|k| k.to_string()).collect();
    let dropped = if dropped.is_empty() { "none".to_string() } else { dropped.join(",") };

    let mut s = format!(
        "command=spectrum n={} p1={p1} ratio={} method={method} seed={} lambda_max={lambda_max} sample_lambda_max={}",
        spec.n(),
        spec.ratio(),
        a.seed,
        spec.lambda_max()
    );
    let _ = writeln!(s, " moments_requested={requested} moments_used={used} dropped={dropped}");
    for (k, m) in moments.iter().enumerate() {
        let _ = writeln!(s, "moment order={} estimate={m}", k + 1);
    }
    if let Some(m) = &model {
        for (t, w) in m.support.iter().zip(&m.weights).filter(|(_, w)| **w > 0.0) {
            let _ = writeln!(s, "atom support={t} weight={w}");
        }
        let _ = writeln!(s, "# {} atoms with positive weight, mean {:.6}", m.weights.iter().filter(|w| **w > 0.0).count(), m.mean());
    }
    let _ = writeln!(s, "# estimated largest eigenvalue {lambda_max:.6}; largest sample eigenvalue {:.6}", spec.lambda_max());
    save_report(a.out.as_ref(), &s)?;
    Ok(s)
}

fn read_sample(path: &Path, center: bool) -> Result<Sample, CliError> {
    match ingest_csv_with(path, Layout::Source, center)? {
        Ingested::Source(s) => Ok(s),
        _ => unreachable!("source layout yields a sample"),
    }
}

fn run_transfer(a: &TransferArgs) -> Result<String, CliError> {
    let settings = a.spectrum.settings()?;
    let target = read_sample(&a.target, a.center)?;
    let paths: Vec<&PathBuf> = a.sources.iter().filter(|p| !p.as_os_str().is_empty()).collect();
    let sources = paths.iter().map(|p| read_sample(p, a.center)).collect::<Result<Vec<_>, _>>()?;
    let msd = MultiSourceData::new(target, sources)?;
    let pairing = match a.pairing_seed {
        Some(seed) => Pairing::Shuffled { seed },
        None => Pairing::InOrder,
    };
    let config = TransferConfig { spectrum: settings, pairing, ..TransferConfig::default() };
    let (p, n0) = (msd.p(), msd.target.n());
    let (report, cv) = match (&a.c0, &a.cv_c0) {
        (Some(c), _) => {
            let mut r = tutrans_with(&msd, &config, transfer_level(*c, p, n0), a.alpha, a.eig_method, a.seed)?;
            r.c0 = Some(*c);
            (r, None)
        }
        (None, Some(Grid(grid))) => {
            let (r, cv) = tutrans_cv_with(&msd, &config, grid, a.folds, a.alpha, a.eig_method, a.seed)?;
            (r, Some((grid.clone(), cv)))
        }
        (None, None) => unreachable!("clap requires one of --c0 and --cv-c0"),
    };

    let selected = if report.selected.is_empty() {
        "none".to_string()
    } else {
        report.selected.iter().map(|k| (k + 1).to_string()).collect::<Vec<_>>().join(",")
    };
    let c0 = report.c0.expect("set on both paths");
    let pairing_text = match pairing {
        Pairing::InOrder => "in-order".to_string(),
        Pairing::Shuffled { seed } => format!("shuffled:{seed}"),
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        "command=transfer sources={} p={p} n0={n0} c0={c0} delta0={} alpha={} eig_method={} seed={} pairing={pairing_text} selected={selected} lambda={}",
        msd.n_sources(),
        report.delta0,
        a.alpha,
        a.eig_method,
        a.seed,
        report.lambda
    );
    for (k, r) in report.per_source.iter().enumerate() {
        let _ = writeln!(
            s,
            "source index={} n={} t_stat={} p_value={} reject={} degenerate={}",
            k + 1,
            msd.sources[k].n(),
            r.t_stat,
            r.p_value,
            r.reject,
            r.degenerate
        );
    }
    if let Some((grid, cv)) = &cv {
        for (c, e) in grid.iter().zip(&cv.cv_errors) {
            let _ = writeln!(s, "cv c0={c} error={e}");
        }
    }
    match &a.beta_out {
        Some(path) => {
            let mut csv = String::from("index,beta\n");
            for (j, b) in report.beta0_hat.iter().enumerate() {
                let _ = writeln!(csv, "{},{b}", j + 1);
            }
            save(path, &csv)?;
        }
        None => {
            for (j, b) in report.beta0_hat.iter().enumerate().filter(|(_, b)| **b != 0.0) {
                let _ = writeln!(s, "beta index={} value={b}", j + 1);
            }
        }
    }
    let nnz = report.beta0_hat.iter().filter(|b| **b != 0.0).count();
    if report.selected.is_empty() {
        let _ = writeln!(s, "# no source passed; target-only fit with {nnz} nonzero coefficients");
    } else {
        let _ = writeln!(
            s,
            "# {} of {} sources transferable; fit with {nnz} nonzero coefficients",
            report.selected.len(),
            msd.n_sources()
        );
    }
    save_report(a.out.as_ref(), &s)?;
    Ok(s)
}

fn resolve_methods(names: &[String], oracle: impl Fn() -> EigMethod) -> Result<Vec<EigMethod>, CliError> {
    names
        .iter()
        .map(|name| match name.trim() {
            "fixed" => Ok(oracle()),
            other => other.parse::<EigMethod>().map_err(CliError::Input),
        })
        .collect()
}

fn run_simulate(a: &SimulateArgs, err: &mut dyn Write) -> Result<String, CliError> {
    match a.scenario {
        ScenarioArg::Type1 | ScenarioArg::Power => simulate_testing(a, err),
        ScenarioArg::Transfer => simulate_transfer(a, err),
    }
}

fn simulate_testing(a: &SimulateArgs, err: &mut dyn Write) -> Result<String, CliError> {
    if a.nk.is_some() || a.distances.is_some() {
        return Err(CliError::Input("--nk and --distances apply to the transfer scenario only".into()));
    }
    let kappa = match (a.scenario, a.kappa) {
        (ScenarioArg::Type1, Some(k)) if k != 0.0 => {
            return Err(CliError::Input(format!("the type1 scenario needs --kappa 0, got {k}")));
        }
        (ScenarioArg::Type1, _) => 0.0,
        (_, k) => k.unwrap_or(0.3),
    };
    let d = ScenarioConfig::default();
    let cfg = ScenarioConfig {
        n: a.n.unwrap_or(d.n),
        p: a.p.unwrap_or(d.p),
        rho: a.rho.unwrap_or(d.rho),
        sparsity: a.sparsity,
        kappa,
        c0: a.c0.unwrap_or(d.c0),
        reps: a.reps.unwrap_or(d.reps),
        seed: a.seed,
        alpha: a.alpha,
        ..d
    };
    cfg.validate()?;
    let names = if a.eig_method.is_empty() { vec!["fixed".into(), "mplp".into(), "mpmo".into()] } else { a.eig_method.clone() };
    let methods = resolve_methods(&names, || cfg.oracle_method())?;

    let start = Instant::now();
    let summaries = run_type1_power_multi(&cfg, &methods)?;
    let _ = writeln!(err, "# runtime scenario={:?} seconds={:.3}", a.scenario, start.elapsed().as_secs_f64());

    let scenario = if a.scenario == ScenarioArg::Type1 { "type1" } else { "power" };
    let mut s = String::new();
    let _ = writeln!(
        s,
        "command=simulate scenario={scenario} n={} p={} rho={} sparsity={} c0={} kappa={} delta0={} reps={} seed={} alpha={}",
        cfg.n,
        cfg.p,
        cfg.rho,
        cfg.sparsity,
        cfg.c0,
        cfg.kappa,
        cfg.delta0(),
        cfg.reps,
        cfg.seed,
        cfg.alpha
    );
    for m in &summaries {
        let _ = writeln!(
            s,
            "summary method={} rejection_rate={} mc_se={} failures={} ks={}",
            m.label,
            m.rejection_rate,
            m.mc_se,
            m.failures,
            ks_uniform(&m.per_rep_pvalues)
        );
    }
    for m in &summaries {
        let _ = writeln!(s, "# {}: rejected in {:.1}% of replications at level {}", m.label, 100.0 * m.rejection_rate, cfg.alpha);
    }
    if let Some(path) = &a.out {
        let mut csv = String::from("rep,method,p_value,reject\n");
        for rep in 0..cfg.reps {
            for m in &summaries {
                let pv = m.per_rep_pvalues[rep];
                let reject = if pv.is_nan() { String::new() } else { (pv < cfg.alpha).to_string() };
                let _ = writeln!(csv, "{rep},{},{pv},{reject}", m.label);
            }
        }
        save(path, &csv)?;
    }
    if let Some(path) = &a.emit_curve {
        let mut csv = String::from("kappa,method,rejection_rate,mc_se,failures\n");
        for &k in &a.curve_kappas {
            let point = ScenarioConfig { kappa: k, ..cfg.clone() };
            for m in run_type1_power_multi(&point, &methods)? {
                let _ = writeln!(csv, "{k},{},{},{},{}", m.label, m.rejection_rate, m.mc_se, m.failures);
            }
        }
        save(path, &csv)?;
    }
    Ok(s)
}

fn simulate_transfer(a: &SimulateArgs, err: &mut dyn Write) -> Result<String, CliError> {
    if a.kappa.is_some() || a.emit_curve.is_some() {
        return Err(CliError::Input("--kappa and --emit-curve apply to the type1 and power scenarios only".into()));
    }
    let d = TransferScenario::default();
    let mut scn = TransferScenario {
        n0: a.n.unwrap_or(d.n0),
        nk: a.nk.unwrap_or(d.nk),
        p: a.p.unwrap_or(d.p),
        rho: a.rho.unwrap_or(d.rho),
        c0: a.c0.unwrap_or(d.c0),
        distances: a.distances.clone().unwrap_or(d.distances.clone()),
        alpha: a.alpha,
        reps: a.reps.unwrap_or(d.reps),
        seed: a.seed,
        ..d
    };
    scn.s = scn.s.min(scn.p);
    scn.shift_support = scn.shift_support.min(scn.p);
    let methods = match a.eig_method.as_slice() {
        [] => vec![scn.eig_method],
        names => resolve_methods(names, || EigMethod::Fixed(scn.contrast_lambda_max()))?,
    };
    if methods.len() != 1 {
        return Err(CliError::Input("the transfer scenario takes a single --eig-method".into()));
    }
    scn.eig_method = methods[0];
    scn.validate()?;

    let start = Instant::now();
    let kinds = [TransferMethod::TargetOnly, TransferMethod::PoolAll, TransferMethod::Tutrans];
    let rows = run_transfer_experiment(&scn, &kinds)?;
    let _ = writeln!(err, "# runtime scenario=Transfer seconds={:.3}", start.elapsed().as_secs_f64());

    let distances: Vec<String> = scn.distances.iter().map(f64::to_string).collect();
    let mut s = String::new();
    let _ = writeln!(
        s,
        "command=simulate scenario=transfer n0={} nk={} p={} rho={} s={} signal={} distances={} c0={} delta0={} eig_method={} reps={} seed={} alpha={}",
        scn.n0,
        scn.nk,
        scn.p,
        scn.rho,
        scn.s,
        scn.signal,
        if distances.is_empty() { "none".to_string() } else { distances.join(",") },
        scn.c0,
        scn.delta0(),
        scn.eig_method,
        scn.reps,
        scn.seed,
        scn.alpha
    );
    for r in &rows {
        let used: Vec<f64> = r.sources_used.iter().map(|&u| u as f64).collect();
        let _ = writeln!(
            s,
            "summary method={} median_estimation_error={} median_prediction_error={} median_sources_used={} failures={}",
            r.method,
            r.median_estimation_error(),
            r.median_prediction_error(),
            crate::sim::median(&used),
            r.failures
        );
    }
    for r in &rows {
        let _ = writeln!(s, "# {}: median ‖β̂₀ − β₀‖ = {:.4}", r.method, r.median_estimation_error());
    }
    if let Some(path) = &a.out {
        let mut csv = String::from("rep,method,estimation_error,prediction_error,sources_used\n");
        for rep in 0..scn.reps {
            for r in &rows {
                let _ = writeln!(
                    csv,
                    "{rep},{},{},{},{}",
                    r.method, r.estimation_errors[rep], r.prediction_errors[rep], r.sources_used[rep]
                );
            }
        }
        save(path, &csv)?;
    }
    Ok(s)
}
