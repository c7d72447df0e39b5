//! `itergp` command-line front end: `fit`, `predict`, `sample`, `benchmark`.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 data or I/O
//! error, 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rayon::prelude::*;

use itergp::artifact::{ModelArtifact, TraceSummary};
use itergp::benchmark::{run_benchmark, BenchmarkOptions, BenchmarkReport};
use itergp::config::{DataSource, RunConfig};
use itergp::data::{self, Dataset};
use itergp::policies::{InducingSpec, PolicyKind};
use itergp::{Error, IterGp, PriorMean};

#[cfg(feature = "oracles")]
mod reference;

pub const THREADS_ENV: &str = "ITERGP_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn config(e: impl ToString) -> Self {
        CliError::Config(e.to_string())
    }

    fn data(e: impl ToString) -> Self {
        CliError::Data(e.to_string())
    }

    /// Errors raised while computing: shape problems count as data errors.
    fn compute(e: Error) -> Self {
        match e {
            Error::Factorization(_) | Error::DegenerateAction { .. } => CliError::Numerical(e.to_string()),
            Error::Parse(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "itergp", version, about = "Computation-aware Gaussian process regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the solver on training data and write a model file.
    Fit(RunArgs),
    /// Predictive mean and variance at query points.
    Predict(PredictArgs),
    /// Joint posterior sample paths at query points.
    Sample(SampleArgs),
    /// Test-set RMSE/NLL over a budget schedule for one or more policies.
    Benchmark(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// key=value configuration file.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set noise=0.1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub lengthscale: Option<f64>,
    #[arg(long)]
    pub output_scale: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub budgets: Option<String>,
    /// Model file for `fit`, report directory for `benchmark`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VarianceKind {
    /// Variance of the latent function.
    Latent,
    /// Variance of a noisy observation (latent + noise).
    Observation,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    pub model: PathBuf,
    pub query: PathBuf,
    #[arg(long, value_enum, default_value_t = VarianceKind::Latent)]
    pub variance: VarianceKind,
    /// Add mathematical and computational variance columns.
    #[arg(long, requires = "dense_oracle")]
    pub decompose: bool,
    /// Allow an O(n³) dense factorization of the training kernel matrix.
    #[arg(long)]
    pub dense_oracle: bool,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    pub model: PathBuf,
    pub query: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("itergp: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fit(args) => {
            let cfg = load_config(&args)?;
            init_threads(&cfg)?;
            cmd_fit(&cfg).map(|_| ())
        }
        Command::Benchmark(args) => {
            let cfg = load_config(&args)?;
            init_threads(&cfg)?;
            cmd_benchmark(&cfg).map(|_| ())
        }
        Command::Predict(args) => {
            init_threads(&RunConfig::default())?;
            cmd_predict(&args)
        }
        Command::Sample(args) => {
            init_threads(&RunConfig::default())?;
            cmd_sample(&args)
        }
    }
}

/// Thread count from `ITERGP_THREADS`, else the config, else rayon's default.
fn init_threads(cfg: &RunConfig) -> CliResult<()> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&t| t > 0)
                .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?,
        ),
        Err(_) => cfg.threads,
    };
    if let Some(t) = threads {
        // a pool may already exist when called twice in one process
        if rayon::ThreadPoolBuilder::new().num_threads(t).build_global().is_err() {
            log::debug!("global thread pool already initialized");
        }
    }
    Ok(())
}

/// File, then `--set` overrides, then dedicated flags; validated before use.
pub fn load_config(args: &RunArgs) -> CliResult<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
            RunConfig::parse(&text).map_err(CliError::config)?
        }
        None => RunConfig::default(),
    };
    for o in &args.overrides {
        cfg.apply_override(o).map_err(CliError::config)?;
    }
    let mut set = |k: &str, v: Option<String>| -> CliResult<()> {
        match v {
            Some(v) => cfg.set(k, &v).map_err(CliError::config),
            None => Ok(()),
        }
    };
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    set("kernel", args.kernel.clone())?;
    set("lengthscale", args.lengthscale.map(|v| v.to_string()))?;
    set("output_scale", args.output_scale.map(|v| v.to_string()))?;
    set("noise", args.noise.map(|v| v.to_string()))?;
    set("policy", args.policy.clone())?;
    set("max_iterations", args.max_iterations.map(|v| v.to_string()))?;
    set("seed", args.seed.map(|v| v.to_string()))?;
    set("data", path(&args.data))?;
    set("train", path(&args.train))?;
    set("test", path(&args.test))?;
    set("budgets", args.budgets.clone())?;
    set("output", path(&args.output))?;
    cfg.validate().map_err(CliError::config)?;
    Ok(cfg)
}

/// Parse a policy code. A bare `pseudo-input` draws `default_m` inducing points.
pub fn parse_policy(code: &str, default_m: Option<usize>) -> CliResult<PolicyKind> {
    if code.trim() == "pseudo-input" {
        if let Some(m) = default_m.filter(|&m| m > 0) {
            return Ok(PolicyKind::PseudoInput(InducingSpec::RandomSubset { m }));
        }
    }
    PolicyKind::from_str(code).map_err(CliError::config)
}

/// Training data and, with `split`, a held-out test set. Single-file
/// sources are split with `train_frac`; without `split` all rows train.
pub fn load_data(cfg: &RunConfig, seed: u64, split: bool) -> CliResult<(Dataset, Option<Dataset>)> {
    let source = cfg
        .data
        .as_ref()
        .ok_or_else(|| CliError::Config("no data source: set data, train, or synth_n".into()))?;
    let (train, test) = match source {
        DataSource::Synthetic { n, d, sigma } => {
            let all = data::synth_sine(*n, *d, *sigma, seed).map_err(CliError::config)?;
            split_or_all(all, split, cfg.train_frac, seed)?
        }
        DataSource::Csv(path) => {
            let all = data::read_dataset_csv(path).map_err(CliError::data)?;
            split_or_all(all, split, cfg.train_frac, seed)?
        }
        DataSource::TrainTest { train, test } => {
            let tr = data::read_dataset_csv(train).map_err(CliError::data)?;
            let te = match test {
                Some(p) => Some(data::read_dataset_csv(p).map_err(CliError::data)?),
                None => None,
            };
            (tr, te)
        }
    };
    if let Some(te) = &test {
        if te.dim() != train.dim() {
            return Err(CliError::Data(format!(
                "train has {} input columns, test has {}",
                train.dim(),
                te.dim()
            )));
        }
    }
    if cfg.standardize {
        if let Some(te) = &test {
            let (tr, te, _) = data::standardize_split(&train, te).map_err(CliError::data)?;
            return Ok((tr, Some(te)));
        }
        let st = data::Standardization::fit(&train.inputs);
        let tr = Dataset::new(st.apply(&train.inputs).map_err(CliError::data)?, train.targets.clone())
            .map_err(CliError::data)?;
        return Ok((tr, None));
    }
    Ok((train, test))
}

fn split_or_all(all: Dataset, split: bool, frac: f64, seed: u64) -> CliResult<(Dataset, Option<Dataset>)> {
    if !split {
        return Ok((all, None));
    }
    let (tr, te) = data::split(&all, frac, seed).map_err(CliError::data)?;
    Ok((tr, Some(te)))
}

/// Fit a model as configured and write it to `cfg.output` if set.
pub fn cmd_fit(cfg: &RunConfig) -> CliResult<ModelArtifact> {
    if cfg.standardize {
        return Err(CliError::Config(
            "standardize is only supported for benchmark runs; model files store raw inputs".into(),
        ));
    }
    let [code] = cfg.policies.as_slice() else {
        return Err(CliError::Config("fit takes exactly one policy".into()));
    };
    let kind = parse_policy(code, None)?;
    let kernel = cfg.kernel_params().map_err(CliError::config)?;
    let stopping = cfg.stopping().map_err(CliError::config)?;
    let (train, _) = load_data(cfg, cfg.seed, false)?;
    let prior = if cfg.prior_mean == 0.0 {
        PriorMean::Zero
    } else {
        PriorMean::Constant(cfg.prior_mean)
    };
    let mut gp = IterGp::new(kernel, train.inputs, train.targets, cfg.noise, prior).map_err(CliError::compute)?;
    let stop_reason = match stopping {
        None => "not_run".to_owned(),
        Some(stopping) => {
            let mut policy = kind.build(gp.handle(), cfg.seed).map_err(CliError::compute)?;
            let reason = gp.run(policy.as_mut(), &stopping).map_err(CliError::compute)?;
            reason.as_str().to_owned()
        }
    };
    log::info!(
        "fit: {} iterations, residual norm {:e}, stop: {stop_reason}",
        gp.iteration(),
        gp.state().residual().norm()
    );
    let trace = TraceSummary {
        policy: kind.to_string(),
        iterations: gp.iteration(),
        stop_reason,
        residual_norm: gp.state().residual().norm(),
        matvecs: gp.handle().matvec_count(),
    };
    let artifact = ModelArtifact::from_posterior(&gp.posterior(), trace).map_err(CliError::compute)?;
    if let Some(out) = &cfg.output {
        artifact.save(out).map_err(CliError::data)?;
    }
    Ok(artifact)
}

fn load_model_and_queries(model: &Path, query: &Path) -> CliResult<(ModelArtifact, DMatrix<f64>)> {
    let artifact = ModelArtifact::load(model).map_err(CliError::data)?;
    let q = data::read_points_csv(query).map_err(CliError::data)?;
    if q.ncols() != artifact.inputs.ncols() {
        return Err(CliError::Data(format!(
            "query has {} input columns, model expects {}",
            q.ncols(),
            artifact.inputs.ncols()
        )));
    }
    Ok((artifact, q))
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| CliError::Data(format!("cannot write {}: {e}", p.display()))),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes).map_err(CliError::data)
        }
    }
}

/// CSV with columns `mean,variance` and, with `--decompose`,
/// `mathematical,computational`.
pub fn predict_csv(args: &PredictArgs) -> CliResult<Vec<u8>> {
    let (artifact, q) = load_model_and_queries(&args.model, &args.query)?;
    let post = artifact.posterior().map_err(CliError::data)?;
    let mean = post.predict_mean(&q).map_err(CliError::compute)?;
    let mut var = post.predict_var(&q).map_err(CliError::compute)?;
    if args.variance == VarianceKind::Observation {
        var.add_scalar_mut(post.noise());
    }
    let split = if args.decompose {
        Some(decompose(&artifact, &post, &q)?)
    } else {
        None
    };
    let mut w = csv_writer();
    let mut header = vec!["mean", "variance"];
    if split.is_some() {
        header.extend(["mathematical", "computational"]);
    }
    w.write_record(&header).map_err(CliError::data)?;
    for i in 0..q.nrows() {
        let mut rec = vec![data::format_f64(mean[i]), data::format_f64(var[i])];
        if let Some(parts) = &split {
            rec.push(data::format_f64(parts[i].0));
            rec.push(data::format_f64(parts[i].1));
        }
        w.write_record(&rec).map_err(CliError::data)?;
    }
    w.into_inner().map_err(|e| CliError::Data(e.to_string()))
}

#[cfg(feature = "oracles")]
fn decompose(
    artifact: &ModelArtifact,
    post: &itergp::CombinedPosterior,
    q: &DMatrix<f64>,
) -> CliResult<Vec<(f64, f64)>> {
    let n = artifact.inputs.nrows();
    let exact = itergp_oracles::ExactGp::new(
        artifact.kernel,
        artifact.inputs.clone(),
        &nalgebra::DVector::zeros(n),
        artifact.noise,
        PriorMean::Zero,
    )
    .map_err(|e| CliError::Numerical(e.to_string()))?;
    q.row_iter()
        .map(|row| {
            let x: Vec<f64> = row.iter().copied().collect();
            let b = post.decompose_variance(&x, Some(&exact)).map_err(CliError::compute)?;
            Ok((b.mathematical.unwrap_or(f64::NAN), b.computational.unwrap_or(f64::NAN)))
        })
        .collect()
}

#[cfg(not(feature = "oracles"))]
fn decompose(
    _artifact: &ModelArtifact,
    _post: &itergp::CombinedPosterior,
    _q: &DMatrix<f64>,
) -> CliResult<Vec<(f64, f64)>> {
    Err(CliError::Config(
        "--decompose needs a build with the `oracles` feature".into(),
    ))
}

pub fn cmd_predict(args: &PredictArgs) -> CliResult<()> {
    let bytes = predict_csv(args)?;
    write_output(args.output.as_deref(), &bytes)
}

/// CSV with columns `sample,q1,…,qp`, one row per sample path.
pub fn sample_csv(args: &SampleArgs) -> CliResult<Vec<u8>> {
    if args.count == 0 {
        return Err(CliError::Config("--count must be at least 1".into()));
    }
    let (artifact, q) = load_model_and_queries(&args.model, &args.query)?;
    let post = artifact.posterior().map_err(CliError::data)?;
    let paths = post.sample_paths(&q, args.count, args.seed).map_err(CliError::compute)?;
    let mut w = csv_writer();
    let mut header = vec!["sample".to_owned()];
    header.extend((1..=q.nrows()).map(|j| format!("q{j}")));
    w.write_record(&header).map_err(CliError::data)?;
    for (s, row) in paths.row_iter().enumerate() {
        let mut rec = vec![s.to_string()];
        rec.extend(row.iter().map(|&v| data::format_f64(v)));
        w.write_record(&rec).map_err(CliError::data)?;
    }
    w.into_inner().map_err(|e| CliError::Data(e.to_string()))
}

pub fn cmd_sample(args: &SampleArgs) -> CliResult<()> {
    let bytes = sample_csv(args)?;
    write_output(args.output.as_deref(), &bytes)
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

/// File stem for a policy code: `cg-precond:8` becomes `cg-precond-8`.
pub fn report_stem(code: &str) -> String {
    code.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '-' })
        .collect()
}

const REFERENCE_CODES: [&str; 3] = ["ref-cg", "ref-cg-textbook", "ref-sor"];

enum Pipeline {
    Solver(PolicyKind),
    Reference(&'static str),
}

/// One merged report per policy, each over seeds `seed..seed+replications`.
/// Writes `<output>/<policy>.csv` and `<output>/<policy>.jsonl` when an
/// output directory is configured.
pub fn cmd_benchmark(cfg: &RunConfig) -> CliResult<Vec<BenchmarkReport>> {
    if cfg.budgets.is_empty() {
        return Err(CliError::Config("benchmark needs a budget schedule (budgets=...)".into()));
    }
    let max_budget = *cfg.budgets.last().expect("non-empty");
    let pipelines = cfg
        .policies
        .iter()
        .map(|code| {
            if let Some(r) = REFERENCE_CODES.iter().find(|r| **r == code.trim()) {
                if cfg!(feature = "oracles") {
                    Ok(Pipeline::Reference(r))
                } else {
                    Err(CliError::Config(format!("`{r}` needs a build with the `oracles` feature")))
                }
            } else {
                parse_policy(code, Some(max_budget)).map(Pipeline::Solver)
            }
        })
        .collect::<CliResult<Vec<_>>>()?;
    let kernel = cfg.kernel_params().map_err(CliError::config)?;
    let options = BenchmarkOptions {
        record_timing: cfg.record_timing,
    };
    let seeds: Vec<u64> = (0..cfg.replications as u64).map(|r| cfg.seed + r).collect();
    let datasets = seeds
        .iter()
        .map(|&s| {
            let (mut tr, te) = load_data(cfg, s, true)?;
            let mut te = te.ok_or_else(|| CliError::Config("benchmark needs a test set".into()))?;
            // A constant prior mean shifts predictions and truth alike, so
            // centering the targets leaves RMSE and NLL unchanged.
            if cfg.prior_mean != 0.0 {
                tr.targets.add_scalar_mut(-cfg.prior_mean);
                te.targets.add_scalar_mut(-cfg.prior_mean);
            }
            Ok((s, tr, te))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mut reports = Vec::with_capacity(pipelines.len());
    for (code, pipeline) in cfg.policies.iter().zip(&pipelines) {
        let per_seed = datasets
            .par_iter()
            .map(|(s, tr, te)| -> CliResult<BenchmarkReport> {
                let mut rep = match pipeline {
                    Pipeline::Solver(kind) => {
                        run_benchmark(tr, te, kernel, cfg.noise, kind, &cfg.budgets, *s, &options)
                            .map_err(CliError::compute)?
                    }
                    Pipeline::Reference(r) => reference_benchmark(r, tr, te, cfg, *s, &options)?,
                };
                rep.meta.policy = code.trim().to_owned();
                Ok(rep)
            })
            .collect::<CliResult<Vec<_>>>()?;
        let merged = BenchmarkReport::merge(per_seed).map_err(CliError::compute)?;
        if let Some(dir) = &cfg.output {
            write_report(dir, &merged)?;
        }
        reports.push(merged);
    }
    Ok(reports)
}

#[cfg(feature = "oracles")]
fn reference_benchmark(
    code: &str,
    train: &Dataset,
    test: &Dataset,
    cfg: &RunConfig,
    seed: u64,
    options: &BenchmarkOptions,
) -> CliResult<BenchmarkReport> {
    reference::run(code, train, test, cfg, seed, options)
}

#[cfg(not(feature = "oracles"))]
fn reference_benchmark(
    code: &str,
    _train: &Dataset,
    _test: &Dataset,
    _cfg: &RunConfig,
    _seed: u64,
    _options: &BenchmarkOptions,
) -> CliResult<BenchmarkReport> {
    Err(CliError::Config(format!("`{code}` needs the `oracles` feature")))
}

pub fn write_report(dir: &Path, report: &BenchmarkReport) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    let stem = report_stem(&report.meta.policy);
    let mut csv_bytes = Vec::new();
    report.write_csv(&mut csv_bytes).map_err(CliError::data)?;
    write_output(Some(&dir.join(format!("{stem}.csv"))), &csv_bytes)?;
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut jsonl = Vec::new();
    report.write_jsonl(&mut jsonl, created).map_err(CliError::data)?;
    write_output(Some(&dir.join(format!("{stem}.jsonl"))), &jsonl)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_errors_map_to_exit_codes() {
        let code = |e: Error| CliError::compute(e).exit_code();
        assert_eq!(code(Error::Factorization("joint prior".into())), 3);
        assert_eq!(code(Error::DegenerateAction { eta: 0.0, threshold: 1e-12 }), 3);
        assert_eq!(code(Error::Parse("policy".into())), 1);
        assert_eq!(code(Error::Data("row 1".into())), 2);
        assert_eq!(code(Error::DimensionMismatch { what: "targets", expected: 3, actual: 2 }), 2);
    }

    #[test]
    fn report_stems_are_file_safe() {
        assert_eq!(report_stem("cg-precond:8"), "cg-precond-8");
        assert_eq!(report_stem("pseudo-input:/tmp/z.csv"), "pseudo-input--tmp-z-csv");
        assert_eq!(report_stem("ref_sor"), "ref_sor");
    }
}
