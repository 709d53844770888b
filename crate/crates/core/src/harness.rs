//! Monte Carlo benchmark runner, report writers and the `icrbar` command line.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::data::{apply_covariate_overrides, load_dataset, write_covariate_overrides, write_dataset, DataError, Dataset};
use crate::emcore::Model;
use crate::penalty::{PenaltyKind, DEFAULT_DELTA, DEFAULT_PSI};
use crate::simgen::{gen_dataset, replication_seed, Scenario, SimError};
use crate::solver::{
    default_tau_grid, fit_penalized_from, fit_unpenalized_model, initializer, oracle_fit, pair_grid, select_tau_from,
    select_transformation, FitConfig, FitResult, SolverError,
};
use crate::transform::TransformationSpec;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{0}")]
    Config(String),
    #[error("{failures} of {reps} replications failed for {penalty}")]
    TooManyFailures {
        penalty: String,
        failures: usize,
        reps: usize,
    },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Exit status: 2 for bad input or arguments, 1 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Io { .. } | HarnessError::Data(_) => 2,
            HarnessError::Sim(SimError::Invalid(_)) => 2,
            HarnessError::Solver(SolverError::Config(_)) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

// ----------------------------------------------------------------------
// Metrics
// ----------------------------------------------------------------------

/// Selection and estimation error of one fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepMetrics {
    pub tp: usize,
    pub fp: usize,
    pub mcv: usize,
    pub mse: f64,
}

/// `[rho^{|i-j|}]`, the covariate covariance of the simulation design.
pub fn ar1_covariance(d: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| rho.powi(i.abs_diff(j) as i32))
}

/// Counts and the covariance-weighted squared error summed over risks.
/// `sigma` holds one matrix per risk.
pub fn replication_metrics(
    beta_hat: &DMatrix<f64>,
    beta_true: &DMatrix<f64>,
    sigma: &[DMatrix<f64>],
    zero_threshold: f64,
) -> RepMetrics {
    let (mut tp, mut fp, mut q) = (0, 0, 0);
    for (est, truth) in beta_hat.iter().zip(beta_true.iter()) {
        let selected = est.abs() > zero_threshold;
        if *truth != 0.0 {
            q += 1;
            tp += usize::from(selected);
        } else {
            fp += usize::from(selected);
        }
    }
    let mse = (0..beta_hat.nrows())
        .map(|k| {
            let e: DVector<f64> = (beta_hat.row(k) - beta_true.row(k)).transpose();
            (e.transpose() * &sigma[k] * &e)[(0, 0)]
        })
        .sum();
    RepMetrics {
        tp,
        fp,
        mcv: q - tp + fp,
        mse,
    }
}

/// One summary line of a benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub penalty: String,
    pub n: usize,
    /// Total number of coefficients, `K d`.
    pub p: usize,
    /// Number of truly nonzero coefficients.
    pub q: usize,
    pub rho: f64,
    pub r: Vec<f64>,
    pub tp: f64,
    pub fp: f64,
    pub mcv: f64,
    pub mmse: f64,
    pub mse_sd: f64,
    pub reps: usize,
    pub failures: usize,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len();
    if m % 2 == 1 {
        s[m / 2]
    } else {
        0.5 * (s[m / 2 - 1] + s[m / 2])
    }
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

// ----------------------------------------------------------------------
// Benchmark
// ----------------------------------------------------------------------

/// Penalties a benchmark can run. The oracle row is always added.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyChoice {
    Bar,
    Lasso,
    Alasso,
}

impl PenaltyChoice {
    fn kind(self) -> PenaltyKind {
        match self {
            PenaltyChoice::Bar => PenaltyKind::Bar { delta: DEFAULT_DELTA },
            PenaltyChoice::Lasso => PenaltyKind::Lasso,
            // reference filled in from the initializer
            PenaltyChoice::Alasso => PenaltyKind::Alasso {
                psi: DEFAULT_PSI,
                reference: DVector::zeros(0),
            },
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PenaltyChoice::Bar => "BAR",
            PenaltyChoice::Lasso => "LASSO",
            PenaltyChoice::Alasso => "ALASSO",
        }
    }
}

pub const ORACLE: &str = "Oracle";

fn default_reps() -> usize {
    50
}

fn default_penalties() -> Vec<PenaltyChoice> {
    vec![PenaltyChoice::Bar, PenaltyChoice::Lasso, PenaltyChoice::Alasso]
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSettings {
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_penalties")]
    pub penalties: Vec<PenaltyChoice>,
    /// `None` uses [`default_tau_grid`].
    #[serde(default)]
    pub tau_grid: Option<Vec<f64>>,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            reps: default_reps(),
            penalties: default_penalties(),
            tau_grid: None,
        }
    }
}

/// Contents of a benchmark configuration file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub bench: BenchSettings,
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    fn validate(&self) -> Result<(), HarnessError> {
        self.scenario.validate()?;
        if self.bench.reps == 0 {
            return Err(HarnessError::Config("reps must be at least 1".into()));
        }
        if let Some(g) = &self.bench.tau_grid {
            if g.is_empty() || g.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
                return Err(HarnessError::Config("tau_grid must be nonempty, finite and nonnegative".into()));
            }
        }
        Ok(())
    }
}

/// One penalty on one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailRow {
    pub rep: usize,
    pub penalty: String,
    /// `None` when the fit failed.
    pub outcome: Option<DetailFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetailFit {
    pub tau: f64,
    pub metrics: RepMetrics,
    pub iterations: usize,
    pub converged: bool,
    pub bar_residual: Option<f64>,
    pub beta_hat: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<MetricsRow>,
    pub details: Vec<DetailRow>,
}

fn detail(rep: usize, label: &str, fit: Result<FitResult, String>, truth: &DMatrix<f64>, sigma: &[DMatrix<f64>], cfg: &FitConfig) -> DetailRow {
    let outcome = match fit {
        Ok(fit) => Some(DetailFit {
            tau: fit.tau,
            metrics: replication_metrics(&fit.beta_hat, truth, sigma, cfg.zero_threshold),
            iterations: fit.iterations,
            converged: fit.converged,
            bar_residual: fit.bar_residual,
            beta_hat: fit.beta_hat,
        }),
        Err(e) => {
            log_failure(rep, label, &e);
            None
        }
    };
    DetailRow {
        rep,
        penalty: label.to_string(),
        outcome,
    }
}

fn log_failure(rep: usize, label: &str, msg: &str) {
    eprintln!("replication {rep}, {label}: {msg}");
}

fn run_replication(config: &BenchConfig, rep: usize, cfg: &FitConfig) -> Vec<DetailRow> {
    let scenario = Scenario {
        seed: replication_seed(config.scenario.seed, rep),
        ..config.scenario.clone()
    };
    let truth = scenario.beta_true();
    let sigma = vec![ar1_covariance(scenario.d_n, scenario.rho); scenario.k];
    let labels: Vec<&str> = config
        .bench
        .penalties
        .iter()
        .map(|p| p.label())
        .chain(std::iter::once(ORACLE))
        .collect();
    let fail_all = |msg: String| -> Vec<DetailRow> {
        log_failure(rep, "all", &msg);
        labels
            .iter()
            .map(|l| DetailRow {
                rep,
                penalty: l.to_string(),
                outcome: None,
            })
            .collect()
    };
    let (sim, specs) = match gen_dataset(&scenario).and_then(|s| Ok((s, scenario.specs()?))) {
        Ok(v) => v,
        Err(e) => return fail_all(e.to_string()),
    };
    let model = match Model::new(&sim.dataset, specs.clone()) {
        Ok(m) => m,
        Err(e) => return fail_all(e.to_string()),
    };
    let grid = config
        .bench
        .tau_grid
        .clone()
        .unwrap_or_else(|| default_tau_grid(scenario.n));
    let init = initializer(&model, cfg).map_err(|e| e.to_string());
    let mut rows: Vec<DetailRow> = config
        .bench
        .penalties
        .iter()
        .map(|p| {
            let fit = init.clone().and_then(|init| {
                select_tau_from(&model, &init, &p.kind(), &grid, cfg)
                    .map(|sel| sel.fit)
                    .map_err(|e| e.to_string())
            });
            detail(rep, p.label(), fit, &truth, &sigma, cfg)
        })
        .collect();
    let oracle = oracle_fit(&sim.dataset, &specs, &scenario.true_support(), cfg).map_err(|e| e.to_string());
    rows.push(detail(rep, ORACLE, oracle, &truth, &sigma, cfg));
    rows
}

fn aggregate(config: &BenchConfig, label: &str, details: &[DetailRow]) -> Result<MetricsRow, HarnessError> {
    let sc = &config.scenario;
    let fits: Vec<&DetailFit> = details
        .iter()
        .filter(|d| d.penalty == label)
        .filter_map(|d| d.outcome.as_ref())
        .collect();
    let reps = config.bench.reps;
    let failures = reps - fits.len();
    if 2 * failures > reps {
        return Err(HarnessError::TooManyFailures {
            penalty: label.to_string(),
            failures,
            reps,
        });
    }
    let m = fits.len() as f64;
    let mean = |f: &dyn Fn(&RepMetrics) -> usize| fits.iter().map(|d| f(&d.metrics) as f64).sum::<f64>() / m;
    let mses: Vec<f64> = fits.iter().map(|d| d.metrics.mse).collect();
    Ok(MetricsRow {
        penalty: label.to_string(),
        n: sc.n,
        p: sc.k * sc.d_n,
        q: sc.true_support().iter().map(Vec::len).sum(),
        rho: sc.rho,
        r: sc.r.clone(),
        tp: mean(&|x| x.tp),
        fp: mean(&|x| x.fp),
        mcv: mean(&|x| x.mcv),
        mmse: median(&mses),
        mse_sd: sample_sd(&mses),
        reps: fits.len(),
        failures,
    })
}

/// Runs every replication (concurrently, on `threads` workers when given)
/// and reduces the per-replication results in replication order.
pub fn run_bench(config: &BenchConfig, cfg: &FitConfig, threads: Option<usize>) -> Result<BenchReport, HarnessError> {
    config.validate()?;
    let work = || -> Vec<DetailRow> {
        (0..config.bench.reps)
            .into_par_iter()
            .map(|rep| run_replication(config, rep, cfg))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    };
    let details = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?
            .install(work),
        None => work(),
    };
    let labels: Vec<&str> = config
        .bench
        .penalties
        .iter()
        .map(|p| p.label())
        .chain(std::iter::once(ORACLE))
        .collect();
    let rows = labels
        .iter()
        .map(|l| aggregate(config, l, &details))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BenchReport { rows, details })
}

// ----------------------------------------------------------------------
// Report writers
// ----------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Tsv,
}

impl Format {
    fn delimiter(self) -> u8 {
        match self {
            Format::Csv => b',',
            Format::Tsv => b'\t',
        }
    }

    fn writer<W: Write>(self, out: W) -> csv::Writer<W> {
        csv::WriterBuilder::new().delimiter(self.delimiter()).from_writer(out)
    }
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

pub const SUMMARY_HEADER: [&str; 13] = [
    "penalty", "n", "p", "rho", "r1", "r2", "TP", "FP", "MCV", "MMSE", "MSE_SD", "reps", "failures",
];

pub const DETAIL_HEADER: [&str; 9] = ["rep", "penalty", "tau_star", "tp", "fp", "mcv", "mse", "iters", "converged"];

pub fn write_summary<W: Write>(rows: &[MetricsRow], format: Format, out: W) -> Result<(), HarnessError> {
    let mut w = format.writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        let r_at = |i: usize| r.r.get(i).map(|v| num(*v)).unwrap_or_default();
        w.write_record([
            r.penalty.clone(),
            r.n.to_string(),
            r.p.to_string(),
            num(r.rho),
            r_at(0),
            r_at(1),
            num(r.tp),
            num(r.fp),
            num(r.mcv),
            num(r.mmse),
            num(r.mse_sd),
            r.reps.to_string(),
            r.failures.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_details<W: Write>(rows: &[DetailRow], format: Format, out: W) -> Result<(), HarnessError> {
    let mut w = format.writer(out);
    w.write_record(DETAIL_HEADER)?;
    for d in rows {
        let mut rec = vec![d.rep.to_string(), d.penalty.clone()];
        match &d.outcome {
            Some(f) => rec.extend([
                num(f.tau),
                f.metrics.tp.to_string(),
                f.metrics.fp.to_string(),
                f.metrics.mcv.to_string(),
                num(f.metrics.mse),
                f.iterations.to_string(),
                f.converged.to_string(),
            ]),
            None => rec.extend(["NA", "NA", "NA", "NA", "NA", "NA", "false"].map(String::from)),
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Coefficient table `risk,covariate,estimate,zero` followed by a blank line
/// and `metric,value`.
pub fn write_fit_report<W: Write>(fit: &FitResult, format: Format, mut out: W) -> Result<(), HarnessError> {
    {
        let mut w = format.writer(&mut out);
        w.write_record(["risk", "covariate", "estimate", "zero"])?;
        for k in 0..fit.beta_hat.nrows() {
            for a in 0..fit.beta_hat.ncols() {
                let b = fit.beta_hat[(k, a)];
                w.write_record([
                    (k + 1).to_string(),
                    format!("z{}", a + 1),
                    format!("{b:.8}"),
                    (b == 0.0).to_string(),
                ])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
    }
    writeln!(out).map_err(csv::Error::from)?;
    let mut w = format.writer(&mut out);
    w.write_record(["metric", "value"])?;
    let mut metrics = vec![
        ("penalty", fit.penalty.unwrap_or("none").to_string()),
        ("tau", num(fit.tau)),
        ("loglik", format!("{:.8}", fit.loglik_observed)),
        ("profile_objective", format!("{:.8}", fit.profile_objective)),
        ("iterations", fit.iterations.to_string()),
        ("converged", fit.converged.to_string()),
    ];
    if let Some(g) = fit.gcv {
        metrics.push(("gcv", format!("{g:.8}")));
    }
    for (m, v) in metrics {
        w.write_record([m, v.as_str()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

// ----------------------------------------------------------------------
// Command line
// ----------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(name = "icrbar", version, about = "Penalized transformation models for interval-censored competing risks")]
struct Cli {
    /// Base seed; overrides the scenario seed of `simulate` and `bench`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate one dataset from a scenario.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one dataset, unpenalized or with a penalty.
    Fit(FitArgs),
    /// Print the GCV score of every tau on a grid.
    Select(SelectArgs),
    /// Log-likelihood over a grid of transformation parameters.
    Gridsearch {
        #[command(flatten)]
        input: DataArgs,
        #[arg(long, default_value_t = 3.0)]
        rmax: f64,
        #[arg(long, default_value_t = 0.2)]
        rstep: f64,
    },
    /// Monte Carlo benchmark.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `bench.reps` of the config.
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    /// Long-format file of time-varying covariates.
    #[arg(long)]
    covariates: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    risks: usize,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long, default_value_t = 0.0)]
    r1: f64,
    #[arg(long, default_value_t = 0.0)]
    r2: f64,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum)]
    penalty: Option<PenaltyChoice>,
    #[arg(long, conflicts_with = "tune")]
    tau: Option<f64>,
    /// Choose tau by GCV over the default grid.
    #[arg(long)]
    tune: bool,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum)]
    penalty: PenaltyChoice,
    /// Comma-separated tau values (default grid when omitted).
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
}

fn read_data(args: &DataArgs) -> Result<Dataset, HarnessError> {
    let file = File::open(&args.data).map_err(io_err(&args.data))?;
    let mut ds = load_dataset(file, args.risks)?;
    if let Some(path) = &args.covariates {
        ds = apply_covariate_overrides(ds, File::open(path).map_err(io_err(path))?)?;
    }
    Ok(ds)
}

fn model_specs(args: &ModelArgs) -> Result<Vec<TransformationSpec>, HarnessError> {
    if args.input.risks != 2 {
        return Err(HarnessError::Config("the command line supports two risks".into()));
    }
    [args.r1, args.r2]
        .iter()
        .map(|&r| TransformationSpec::new(r).map_err(|e| HarnessError::Config(e.to_string())))
        .collect()
}

fn create(path: &Path) -> Result<File, HarnessError> {
    File::create(path).map_err(io_err(path))
}

fn make_dir(path: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn cmd_simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), HarnessError> {
    let mut sc = BenchConfig::load(config)?.scenario;
    if let Some(s) = seed {
        sc.seed = s;
    }
    let sim = gen_dataset(&sc)?;
    make_dir(out)?;
    write_dataset(&sim.dataset, create(&out.join("data.csv"))?)?;
    if sim.dataset.subjects().iter().any(|s| !s.covariates.is_constant()) {
        write_covariate_overrides(&sim.dataset, create(&out.join("covariates.csv"))?)?;
    }
    let beta = sc.beta_true();
    let mut w = csv::Writer::from_writer(create(&out.join("truth.csv"))?);
    w.write_record(["risk", "covariate", "beta"])?;
    for k in 0..beta.nrows() {
        for a in 0..beta.ncols() {
            w.write_record([(k + 1).to_string(), format!("z{}", a + 1), beta[(k, a)].to_string()])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    if sim.truncated > 0 {
        eprintln!("{} subjects had cause probabilities clipped to sum to 1", sim.truncated);
    }
    Ok(())
}

fn cmd_fit(args: &FitArgs, format: Format) -> Result<(), HarnessError> {
    let ds = read_data(&args.model.input)?;
    let specs = model_specs(&args.model)?;
    let model = Model::new(&ds, specs)?;
    let cfg = FitConfig::default();
    let fit = match args.penalty {
        None => {
            if args.tau.is_some() || args.tune {
                return Err(HarnessError::Config("--tau and --tune need --penalty".into()));
            }
            fit_unpenalized_model(&model, &cfg)?
        }
        Some(p) => {
            let init = initializer(&model, &cfg)?;
            let kind = match p.kind() {
                PenaltyKind::Alasso { psi, .. } => PenaltyKind::Alasso {
                    psi,
                    reference: init.state.beta_vec(),
                },
                k => k,
            };
            if args.tune {
                select_tau_from(&model, &init, &kind, &default_tau_grid(ds.len()), &cfg)?.fit
            } else {
                let tau = args
                    .tau
                    .ok_or_else(|| HarnessError::Config("a penalty needs --tau or --tune".into()))?;
                fit_penalized_from(&model, &init, &kind, tau, &cfg)?
            }
        }
    };
    write_fit_report(&fit, format, io::stdout().lock())
}

fn cmd_select(args: &SelectArgs, format: Format) -> Result<(), HarnessError> {
    let ds = read_data(&args.model.input)?;
    let model = Model::new(&ds, model_specs(&args.model)?)?;
    let cfg = FitConfig::default();
    let grid = args.grid.clone().unwrap_or_else(|| default_tau_grid(ds.len()));
    let init = initializer(&model, &cfg)?;
    let sel = select_tau_from(&model, &init, &args.penalty.kind(), &grid, &cfg)?;
    let mut w = format.writer(io::stdout().lock());
    w.write_record(["tau", "gcv", "selected", "error"])?;
    for c in &sel.candidates {
        w.write_record([
            num(c.tau),
            c.gcv.map(|g| format!("{g:.8}")).unwrap_or_else(|| "NA".into()),
            (c.tau == sel.tau).to_string(),
            c.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn cmd_gridsearch(input: &DataArgs, rmax: f64, rstep: f64, format: Format) -> Result<(), HarnessError> {
    let ds = read_data(input)?;
    if ds.n_risks() != 2 {
        return Err(HarnessError::Config("the command line supports two risks".into()));
    }
    let grid = pair_grid(rmax, rstep)?;
    let sel = select_transformation(&ds, &grid, &FitConfig::default())?;
    let mut w = format.writer(io::stdout().lock());
    w.write_record(["r1", "r2", "loglik", "selected"])?;
    for c in &sel.table {
        w.write_record([
            num(c.r[0]),
            num(c.r[1]),
            c.loglik.map(|l| format!("{l:.8}")).unwrap_or_else(|| "NA".into()),
            (c.r == sel.best).to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn cmd_bench(
    config: &Path,
    reps: Option<usize>,
    out: &Path,
    seed: Option<u64>,
    threads: Option<usize>,
    format: Format,
) -> Result<(), HarnessError> {
    let mut cfg = BenchConfig::load(config)?;
    if let Some(r) = reps {
        cfg.bench.reps = r;
    }
    if let Some(s) = seed {
        cfg.scenario.seed = s;
    }
    let report = run_bench(&cfg, &FitConfig::default(), threads)?;
    make_dir(out)?;
    let ext = match format {
        Format::Csv => "csv",
        Format::Tsv => "tsv",
    };
    write_summary(&report.rows, format, create(&out.join(format!("summary.{ext}")))?)?;
    write_details(&report.details, format, create(&out.join(format!("detail.{ext}")))?)?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    let run = || match &cli.command {
        Command::Simulate { config, out } => cmd_simulate(config, out, cli.seed),
        Command::Fit(args) => cmd_fit(args, cli.format),
        Command::Select(args) => cmd_select(args, cli.format),
        Command::Gridsearch { input, rmax, rstep } => cmd_gridsearch(input, *rmax, *rstep, cli.format),
        Command::Bench { config, reps, out } => cmd_bench(config, *reps, out, cli.seed, cli.threads, cli.format),
    };
    match (cli.threads, &cli.command) {
        // bench builds its own pool so that --threads also bounds nested work
        (Some(t), c) if !matches!(c, Command::Bench { .. }) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?
            .install(run),
        _ => run(),
    }
}

/// Runs the command line and returns the process exit status.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests;
