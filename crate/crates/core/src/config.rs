//! Flat `key=value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown and
//! repeated keys are errors. Overrides applied with [`RunConfig::set`]
//! replace file values.

use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelParams};
use crate::solver::StoppingConfig;

pub const KEYS: [&str; 24] = [
    "kernel",
    "lengthscale",
    "output_scale",
    "noise",
    "prior_mean",
    "policy",
    "max_iterations",
    "abstol",
    "reltol",
    "seed",
    "data",
    "train",
    "test",
    "synth_n",
    "synth_d",
    "synth_sigma",
    "train_frac",
    "standardize",
    "budgets",
    "replications",
    "output",
    "record_timing",
    "threads",
    "model",
];

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic { n: usize, d: usize, sigma: f64 },
    /// One CSV split randomly into train and test.
    Csv(PathBuf),
    /// Separate train and (optional) test CSVs.
    TrainTest { train: PathBuf, test: Option<PathBuf> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kernel: KernelFamily,
    pub lengthscale: f64,
    pub output_scale: f64,
    pub noise: f64,
    pub prior_mean: f64,
    /// Policy codes; several only for benchmarks.
    pub policies: Vec<String>,
    pub max_iterations: usize,
    pub abstol: f64,
    pub reltol: f64,
    pub seed: u64,
    pub data: Option<DataSource>,
    pub train_frac: f64,
    pub standardize: bool,
    pub budgets: Vec<usize>,
    pub replications: usize,
    pub output: Option<PathBuf>,
    pub record_timing: bool,
    pub threads: Option<usize>,
    pub model: Option<PathBuf>,
    seen: Vec<&'static str>,
    synth: [Option<f64>; 3],
    paths: [Option<PathBuf>; 3],
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kernel: KernelFamily::Rbf,
            lengthscale: 1.0,
            output_scale: 1.0,
            noise: 0.01,
            prior_mean: 0.0,
            policies: vec!["cg".into()],
            max_iterations: 100,
            abstol: 0.0,
            reltol: 1e-10,
            seed: 0,
            data: None,
            train_frac: 0.9,
            standardize: false,
            budgets: Vec::new(),
            replications: 1,
            output: None,
            record_timing: true,
            threads: None,
            model: None,
            seen: Vec::new(),
            synth: [None; 3],
            paths: [None, None, None],
        }
    }
}

fn err(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("config key `{key}`: {msg}"))
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| err(key, format!("cannot parse {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(err(key, format!("expected a boolean, got {value:?}"))),
    }
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("config line {}: expected key=value", lineno + 1))
            })?;
            let k = k.trim();
            let key = KEYS
                .iter()
                .find(|&&known| known == k)
                .ok_or_else(|| err(k, "unknown key"))?;
            if cfg.seen.contains(key) {
                return Err(err(k, "given more than once"));
            }
            cfg.seen.push(key);
            cfg.set(k, v.trim())?;
        }
        Ok(cfg)
    }

    /// `key=value` form of [`RunConfig::set`].
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("override {assignment:?}: expected key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "kernel" => self.kernel = parse(key, value)?,
            "lengthscale" => self.lengthscale = parse(key, value)?,
            "output_scale" => self.output_scale = parse(key, value)?,
            "noise" => self.noise = parse(key, value)?,
            "prior_mean" => self.prior_mean = parse(key, value)?,
            "policy" => {
                self.policies = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_owned)
                    .collect()
            }
            "max_iterations" => self.max_iterations = parse(key, value)?,
            "abstol" => self.abstol = parse(key, value)?,
            "reltol" => self.reltol = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "data" => self.paths[0] = Some(nonempty_path(key, value)?),
            "train" => self.paths[1] = Some(nonempty_path(key, value)?),
            "test" => self.paths[2] = Some(nonempty_path(key, value)?),
            "synth_n" => self.synth[0] = Some(parse::<usize>(key, value)? as f64),
            "synth_d" => self.synth[1] = Some(parse::<usize>(key, value)? as f64),
            "synth_sigma" => self.synth[2] = Some(parse(key, value)?),
            "train_frac" => self.train_frac = parse(key, value)?,
            "standardize" => self.standardize = parse_bool(key, value)?,
            "budgets" => self.budgets = list(key, value)?,
            "replications" => self.replications = parse(key, value)?,
            "output" => self.output = Some(nonempty_path(key, value)?),
            "record_timing" => self.record_timing = parse_bool(key, value)?,
            "threads" => self.threads = Some(parse(key, value)?),
            "model" => self.model = Some(nonempty_path(key, value)?),
            other => return Err(err(other, "unknown key")),
        }
        self.data = self.resolve_data()?;
        Ok(())
    }

    fn resolve_data(&self) -> Result<Option<DataSource>> {
        let any_synth = self.synth.iter().any(Option::is_some);
        let [data, train, test] = &self.paths;
        let sources = usize::from(any_synth) + usize::from(data.is_some()) + usize::from(train.is_some());
        if sources > 1 {
            return Err(Error::Parse(
                "config: give exactly one of synth_*, data, or train/test".into(),
            ));
        }
        if test.is_some() && train.is_none() && sources > 0 {
            return Err(Error::Parse("config: `test` only combines with `train`".into()));
        }
        Ok(if any_synth {
            Some(DataSource::Synthetic {
                n: self.synth[0].unwrap_or(2048.0) as usize,
                d: self.synth[1].unwrap_or(1.0) as usize,
                sigma: self.synth[2].unwrap_or(0.1),
            })
        } else if let Some(p) = data {
            Some(DataSource::Csv(p.clone()))
        } else {
            train.as_ref().map(|t| DataSource::TrainTest {
                train: t.clone(),
                test: test.clone(),
            })
        })
    }

    pub fn kernel_params(&self) -> Result<KernelParams> {
        KernelParams::new(self.kernel, self.lengthscale, self.output_scale)
            .map_err(|e| Error::Parse(format!("config: {e}")))
    }

    /// `None` when `max_iterations` is 0: no solver run, the prior is kept.
    pub fn stopping(&self) -> Result<Option<StoppingConfig>> {
        if self.max_iterations == 0 {
            return Ok(None);
        }
        StoppingConfig::new(self.max_iterations, self.abstol, self.reltol)
            .map(Some)
            .map_err(|e| Error::Parse(format!("config: {e}")))
    }

    /// Checks that do not depend on the command.
    pub fn validate(&self) -> Result<()> {
        self.kernel_params()?;
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(err("noise", "must be a non-negative number"));
        }
        if !self.prior_mean.is_finite() {
            return Err(err("prior_mean", "must be finite"));
        }
        if !(self.abstol.is_finite() && self.abstol >= 0.0) {
            return Err(err("abstol", "must be non-negative"));
        }
        if !(self.reltol.is_finite() && self.reltol >= 0.0) {
            return Err(err("reltol", "must be non-negative"));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(err("train_frac", "must lie in (0, 1)"));
        }
        if self.policies.is_empty() {
            return Err(err("policy", "no policy given"));
        }
        if self.replications == 0 {
            return Err(err("replications", "must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(err("threads", "must be at least 1"));
        }
        if let Some(DataSource::Synthetic { n, d, sigma }) = &self.data {
            if *n == 0 || *d == 0 {
                return Err(err("synth_n", "synthetic data needs n >= 1 and d >= 1"));
            }
            if !(sigma.is_finite() && *sigma >= 0.0) {
                return Err(err("synth_sigma", "must be non-negative"));
            }
        }
        if !self.budgets.is_empty() {
            crate::benchmark::check_budgets(&self.budgets)
                .map_err(|e| err("budgets", e))?;
        }
        Ok(())
    }
}

fn nonempty_path(key: &str, value: &str) -> Result<PathBuf> {
    if value.is_empty() {
        return Err(err(key, "empty path"));
    }
    Ok(PathBuf::from(value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_file() {
        let text = "# demo\nkernel = matern12\nlengthscale=0.5\nnoise=0.01\npolicy=cg, chol-pivoted\n\
                    budgets=8,32,256\nsynth_n=512\nsynth_d=2\nseed=7\nstandardize=yes\n";
        let cfg = RunConfig::parse(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.kernel, KernelFamily::Matern12);
        assert_eq!(cfg.policies, vec!["cg", "chol-pivoted"]);
        assert_eq!(cfg.budgets, vec![8, 32, 256]);
        assert_eq!(cfg.data, Some(DataSource::Synthetic { n: 512, d: 2, sigma: 0.1 }));
        assert!(cfg.standardize);
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        assert!(RunConfig::parse("colour=blue\n").is_err());
        assert!(RunConfig::parse("seed=1\nseed=2\n").is_err());
        assert!(RunConfig::parse("seed\n").is_err());
        assert!(RunConfig::parse("seed=-1\n").is_err());
        assert!(RunConfig::parse("standardize=maybe\n").is_err());
        assert!(RunConfig::parse("data=a.csv\ntrain=b.csv\n").is_err());
        assert!(RunConfig::parse("synth_n=10\ndata=a.csv\n").is_err());
        assert!(RunConfig::parse("output=\n").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        for bad in [
            "lengthscale=0",
            "noise=-1",
            "reltol=-1",
            "train_frac=1",
            "budgets=4,2",
            "replications=0",
            "policy=",
            "output_scale=nan",
        ] {
            let cfg = RunConfig::parse(bad).unwrap();
            assert!(cfg.validate().is_err(), "{bad}");
        }
    }

    #[test]
    fn overrides_win_and_zero_budget_means_prior() {
        let mut cfg = RunConfig::parse("seed=1\nmax_iterations=5\n").unwrap();
        cfg.apply_override("seed=9").unwrap();
        cfg.apply_override("max_iterations=0").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.stopping().unwrap(), None);
        assert!(cfg.apply_override("nope=1").is_err());
        assert!(cfg.apply_override("seed").is_err());
    }
}
