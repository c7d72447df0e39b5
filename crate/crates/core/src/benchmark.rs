//! Budgeted benchmark runs and their reports.
//!
//! One solver run per (policy, seed); the posterior is snapshotted at every
//! budget on the schedule instead of restarting. Reports serialize to CSV
//! and to line-delimited JSON (one `meta` record, then one record per row).

use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;
use serde::Serialize;

use crate::data::{format_f64, Dataset};
use crate::error::{Error, Result};
use crate::kernels::{KernelMatrix, KernelParams};
use crate::metrics;
use crate::policies::PolicyKind;
use crate::posterior::{CombinedPosterior, PriorMean};
use crate::solver::{continue_run, SolverOptions, SolverState, StoppingConfig};

pub const REPORT_COLUMNS: [&str; 8] = [
    "policy",
    "seed",
    "budget",
    "iterations",
    "rmse",
    "nll",
    "matvec_count",
    "wall_ns",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub seed: u64,
    /// Requested budget: solver iterations, or inducing points for
    /// inducing-point pipelines.
    pub budget: usize,
    /// Iterations actually performed; below `budget` after early convergence.
    pub iterations: usize,
    pub rmse: f64,
    /// Absent (NaN, `null` in JSON) for pipelines without a predictive variance.
    pub nll: f64,
    pub matvec_count: usize,
    /// Elapsed time since the start of the run, 0 when timing is disabled.
    pub wall_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportMeta {
    pub policy: String,
    pub kernel: String,
    pub lengthscale: f64,
    pub output_scale: f64,
    pub noise: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub split: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub meta: ReportMeta,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchmarkOptions {
    pub record_timing: bool,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self { record_timing: true }
    }
}

pub fn check_budgets(budgets: &[usize]) -> Result<()> {
    if budgets.is_empty() {
        return Err(Error::InvalidArgument("budget schedule is empty".into()));
    }
    if budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "budget schedule must be strictly increasing".into(),
        ));
    }
    Ok(())
}

pub fn meta_for(
    policy: &str,
    kernel: &KernelParams,
    noise: f64,
    train: &Dataset,
    test: &Dataset,
    split: &str,
) -> ReportMeta {
    ReportMeta {
        policy: policy.to_owned(),
        kernel: kernel.family().to_string(),
        lengthscale: kernel.lengthscale(),
        output_scale: kernel.output_scale(),
        noise,
        n_train: train.len(),
        n_test: test.len(),
        split: split.to_owned(),
    }
}

/// RMSE and NLL of a predictive mean and observation-space variance.
/// A non-positive variance yields NaN NLL instead of failing the run.
pub fn score(mean: &DVector<f64>, obs_var: Option<&DVector<f64>>, truth: &DVector<f64>) -> Result<(f64, f64)> {
    let rmse = metrics::rmse(mean, truth)?;
    let nll = match obs_var {
        Some(v) => metrics::nll(mean, v, truth).unwrap_or_else(|e| {
            log::warn!("nll undefined: {e}");
            f64::NAN
        }),
        None => f64::NAN,
    };
    Ok((rmse, nll))
}

/// Run `policy` once on `train` and report test metrics at every budget.
/// Matvecs spent building the policy (e.g. a preconditioner) are counted.
#[allow(clippy::too_many_arguments)]
pub fn run_benchmark(
    train: &Dataset,
    test: &Dataset,
    kernel: KernelParams,
    noise: f64,
    policy: &PolicyKind,
    budgets: &[usize],
    seed: u64,
    options: &BenchmarkOptions,
) -> Result<BenchmarkReport> {
    check_budgets(budgets)?;
    if test.dim() != train.dim() {
        return Err(Error::dims("test input dimension", train.dim(), test.dim()));
    }
    let start = Instant::now();
    let handle = KernelMatrix::new(kernel, train.inputs.clone(), noise)?;
    let cross = handle.cross_from(&test.inputs)?;
    let mut pol = policy.build(&handle, seed)?;
    let solver_opts = SolverOptions::default();
    let mut state = SolverState::new(train.targets.clone());
    let mut trace = Vec::new();
    let mut rows = Vec::with_capacity(budgets.len());
    for &budget in budgets {
        if budget > state.iteration() {
            let stop = continue_run(
                &mut state,
                &handle,
                pol.as_mut(),
                &StoppingConfig::budget(budget),
                &solver_opts,
                &mut trace,
            )?;
            log::debug!("budget {budget}: stopped with {stop:?} at iteration {}", state.iteration());
        }
        let post = CombinedPosterior::new(
            PriorMean::Zero,
            kernel,
            train.inputs.clone(),
            noise,
            state.v().clone(),
            state.precision(),
        )?;
        let (mean, var) = post.predict_from_cross(&test.inputs, &cross)?;
        let obs = var.add_scalar(noise);
        let (rmse, nll) = score(&mean, Some(&obs), &test.targets)?;
        rows.push(ReportRow {
            seed,
            budget,
            iterations: state.iteration(),
            rmse,
            nll,
            matvec_count: handle.matvec_count(),
            wall_ns: if options.record_timing {
                start.elapsed().as_nanos() as u64
            } else {
                0
            },
        });
    }
    Ok(BenchmarkReport {
        meta: meta_for(&policy.to_string(), &kernel, noise, train, test, "random"),
        rows,
    })
}

#[derive(Serialize)]
struct MetaRecord<'a> {
    record: &'static str,
    created_at: u64,
    #[serde(flatten)]
    meta: &'a ReportMeta,
}

#[derive(Serialize)]
struct RowRecord<'a> {
    record: &'static str,
    policy: &'a str,
    #[serde(flatten)]
    row: &'a ReportRow,
}

impl BenchmarkReport {
    /// Combine per-seed reports of the same pipeline; rows are sorted by
    /// (seed, budget) so the result does not depend on completion order.
    pub fn merge(reports: Vec<BenchmarkReport>) -> Result<BenchmarkReport> {
        let mut it = reports.into_iter();
        let Some(mut out) = it.next() else {
            return Err(Error::InvalidArgument("nothing to merge".into()));
        };
        for r in it {
            if r.meta != out.meta {
                return Err(Error::InvalidArgument(
                    "cannot merge reports with different metadata".into(),
                ));
            }
            out.rows.extend(r.rows);
        }
        out.rows.sort_by_key(|r| (r.seed, r.budget));
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(REPORT_COLUMNS).map_err(crate::data::csv_io)?;
        for r in &self.rows {
            w.write_record([
                self.meta.policy.clone(),
                r.seed.to_string(),
                r.budget.to_string(),
                r.iterations.to_string(),
                format_f64(r.rmse),
                format_f64(r.nll),
                r.matvec_count.to_string(),
                r.wall_ns.to_string(),
            ])
            .map_err(crate::data::csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `created_at` (seconds since the Unix epoch) is the only field that
    /// differs between repeated runs with timing disabled.
    pub fn write_jsonl<W: Write>(&self, mut out: W, created_at: u64) -> Result<()> {
        let meta = MetaRecord {
            record: "meta",
            created_at,
            meta: &self.meta,
        };
        writeln!(out, "{}", serde_json::to_string(&meta).map_err(json_err)?)?;
        for row in &self.rows {
            let rec = RowRecord {
                record: "row",
                policy: &self.meta.policy,
                row,
            };
            writeln!(out, "{}", serde_json::to_string(&rec).map_err(json_err)?)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn json_err(e: serde_json::Error) -> Error {
    Error::InvalidArgument(format!("cannot serialize report: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split, synth_sine};
    use crate::policies::UnitVectorOrder;

    fn small() -> (Dataset, Dataset) {
        split(&synth_sine(60, 2, 0.1, 1).unwrap(), 0.8, 2).unwrap()
    }

    fn opts() -> BenchmarkOptions {
        BenchmarkOptions { record_timing: false }
    }

    #[test]
    fn rows_follow_schedule() {
        let (tr, te) = small();
        let k = KernelParams::rbf(0.5, 1.0).unwrap();
        let rep = run_benchmark(&tr, &te, k, 0.01, &PolicyKind::Residual(crate::policies::PreconditionerSpec::Identity), &[0, 2, 8, 16], 0, &opts()).unwrap();
        assert_eq!(rep.rows.iter().map(|r| r.budget).collect::<Vec<_>>(), vec![0, 2, 8, 16]);
        assert!(rep.rows.windows(2).all(|w| w[0].matvec_count <= w[1].matvec_count));
        assert_eq!(rep.rows[0].matvec_count, 0);
        assert_eq!(rep.rows[3].matvec_count, 16);
        assert!(rep.rows.iter().all(|r| r.wall_ns == 0));
    }

    #[test]
    fn deterministic_under_seed() {
        let (tr, te) = small();
        let k = KernelParams::matern12(0.5, 1.0).unwrap();
        let p = PolicyKind::Random { seed: 3 };
        let a = run_benchmark(&tr, &te, k, 0.01, &p, &[4, 8], 5, &opts()).unwrap();
        let b = run_benchmark(&tr, &te, k, 0.01, &p, &[4, 8], 5, &opts()).unwrap();
        assert_eq!(a, b);
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn schedule_validation() {
        let (tr, te) = small();
        let k = KernelParams::rbf(0.5, 1.0).unwrap();
        let p = PolicyKind::UnitVector(UnitVectorOrder::Natural);
        assert!(run_benchmark(&tr, &te, k, 0.01, &p, &[], 0, &opts()).is_err());
        assert!(run_benchmark(&tr, &te, k, 0.01, &p, &[3, 3], 0, &opts()).is_err());
        assert!(run_benchmark(&tr, &te, k, 0.01, &p, &[5, 2], 0, &opts()).is_err());
    }

    #[test]
    fn merge_sorts_and_checks_meta() {
        let (tr, te) = small();
        let k = KernelParams::rbf(0.5, 1.0).unwrap();
        let p = PolicyKind::Random { seed: 0 };
        let r1 = run_benchmark(&tr, &te, k, 0.01, &p, &[1, 2], 1, &opts()).unwrap();
        let r0 = run_benchmark(&tr, &te, k, 0.01, &p, &[1, 2], 0, &opts()).unwrap();
        let m = BenchmarkReport::merge(vec![r1.clone(), r0.clone()]).unwrap();
        let m2 = BenchmarkReport::merge(vec![r0, r1.clone()]).unwrap();
        assert_eq!(m, m2);
        assert_eq!(m.rows.iter().map(|r| (r.seed, r.budget)).collect::<Vec<_>>(), vec![(0, 1), (0, 2), (1, 1), (1, 2)]);
        let mut other = r1;
        other.meta.policy = "cg".into();
        assert!(BenchmarkReport::merge(vec![m, other]).is_err());
    }

    #[test]
    fn jsonl_shape() {
        let (tr, te) = small();
        let k = KernelParams::rbf(0.5, 1.0).unwrap();
        let mut rep = run_benchmark(&tr, &te, k, 0.01, &PolicyKind::Eigenvector, &[1], 0, &opts()).unwrap();
        rep.rows[0].nll = f64::NAN;
        let mut buf = Vec::new();
        rep.write_jsonl(&mut buf, 42).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0]["record"], "meta");
        assert_eq!(lines[0]["created_at"], 42);
        assert_eq!(lines[0]["kernel"], "rbf");
        assert_eq!(lines[1]["record"], "row");
        assert_eq!(lines[1]["policy"], "eig");
        assert!(lines[1]["nll"].is_null());
    }
}
