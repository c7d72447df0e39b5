//! Benchmark pipelines built on the dense reference implementations:
//! `ref-cg` (classical CG mean, with full reorthogonalization),
//! `ref-cg-textbook` (classical CG mean, no reorthogonalization) and
//! `ref-sor` (subset-of-regressors mean on the same random inducing points
//! that `pseudo-input` draws).

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use itergp::benchmark::{meta_for, score, BenchmarkOptions, BenchmarkReport, ReportRow};
use itergp::config::RunConfig;
use itergp::data::Dataset;
use itergp::policies::random_subset_indices;
use itergp_oracles::{classical_pcg, classical_pcg_reorthogonalized, nystrom_sor_mean};

use crate::{CliError, CliResult};

pub(crate) fn run(
    code: &str,
    train: &Dataset,
    test: &Dataset,
    cfg: &RunConfig,
    seed: u64,
    options: &BenchmarkOptions,
) -> CliResult<BenchmarkReport> {
    let start = Instant::now();
    let kernel = cfg.kernel_params().map_err(CliError::config)?;
    let noise = cfg.noise;
    let n = train.len();
    let max_budget = *cfg.budgets.last().expect("validated schedule");
    let elapsed = || {
        if options.record_timing {
            start.elapsed().as_nanos() as u64
        } else {
            0
        }
    };
    let numerical = |e: itergp_oracles::OracleError| CliError::Numerical(e.to_string());
    let cross = kernel
        .cross_block(&test.inputs, &train.inputs)
        .map_err(CliError::data)?;
    let mut rows = Vec::with_capacity(cfg.budgets.len());
    match code {
        "ref-cg" | "ref-cg-textbook" => {
            let khat = kernel.cross_block(&train.inputs, &train.inputs).map_err(CliError::data)?
                + DMatrix::identity(n, n) * noise;
            let matvec = |v: &DVector<f64>| &khat * v;
            let identity = |r: &DVector<f64>| r.clone();
            let trace = if code == "ref-cg" {
                classical_pcg_reorthogonalized(matvec, &train.targets, identity, max_budget, 0.0)
            } else {
                classical_pcg(matvec, &train.targets, identity, max_budget, 0.0)
            }
            .map_err(numerical)?;
            for &b in &cfg.budgets {
                let i = b.min(trace.iterates.len() - 1);
                let mean = &cross * &trace.iterates[i];
                let (rmse, nll) = score(&mean, None, &test.targets).map_err(CliError::data)?;
                rows.push(ReportRow {
                    seed,
                    budget: b,
                    iterations: i,
                    rmse,
                    nll,
                    matvec_count: i,
                    wall_ns: elapsed(),
                });
            }
        }
        "ref-sor" => {
            if max_budget > n {
                return Err(CliError::Config(format!(
                    "ref-sor needs at most {n} inducing points, budget asks for {max_budget}"
                )));
            }
            let idx = random_subset_indices(n, max_budget, seed).map_err(CliError::config)?;
            for &b in &cfg.budgets {
                if b == 0 {
                    let mean = DVector::zeros(test.len());
                    let (rmse, nll) = score(&mean, None, &test.targets).map_err(CliError::data)?;
                    rows.push(ReportRow { seed, budget: 0, iterations: 0, rmse, nll, matvec_count: 0, wall_ns: elapsed() });
                    continue;
                }
                let z = train.inputs.select_rows(&idx[..b]);
                let sor = nystrom_sor_mean(&kernel, &train.inputs, &train.targets, &z, noise, &test.inputs)
                    .map_err(numerical)?;
                let (rmse, nll) = score(sor.mean(), None, &test.targets).map_err(CliError::data)?;
                rows.push(ReportRow {
                    seed,
                    budget: b,
                    iterations: b,
                    rmse,
                    nll,
                    matvec_count: 0,
                    wall_ns: elapsed(),
                });
            }
        }
        other => return Err(CliError::Config(format!("unknown reference pipeline `{other}`"))),
    }
    Ok(BenchmarkReport {
        meta: meta_for(code, &kernel, noise, train, test, "random"),
        rows,
    })
}
