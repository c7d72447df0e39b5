//! Stationary covariance functions and access to the kernel matrix
//! `K̂ = K + σ²I`, either materialized or evaluated block by block.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this many training points the kernel matrix is never materialized.
pub const DENSE_CACHE_LIMIT: usize = 10_000;
/// Rows per block for the matrix-free matvec.
pub const DEFAULT_BLOCK_ROWS: usize = 1_024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Rbf,
    Matern12,
    Matern32,
    Matern52,
}

impl KernelFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelFamily::Rbf => "rbf",
            KernelFamily::Matern12 => "matern12",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Matern52 => "matern52",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rbf" | "se" | "squared-exponential" => Ok(KernelFamily::Rbf),
            "matern12" | "matern-1/2" | "exponential" => Ok(KernelFamily::Matern12),
            "matern32" | "matern-3/2" => Ok(KernelFamily::Matern32),
            "matern52" | "matern-5/2" => Ok(KernelFamily::Matern52),
            other => Err(Error::Parse(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// Hyperparameters of a stationary kernel `k(x, x') = o · f(‖x − x'‖ / ℓ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    family: KernelFamily,
    lengthscale: f64,
    output_scale: f64,
}

impl KernelParams {
    pub fn new(family: KernelFamily, lengthscale: f64, output_scale: f64) -> Result<Self> {
        if !(lengthscale.is_finite() && lengthscale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lengthscale must be positive and finite, got {lengthscale}"
            )));
        }
        if !(output_scale.is_finite() && output_scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "output_scale must be positive and finite, got {output_scale}"
            )));
        }
        Ok(Self {
            family,
            lengthscale,
            output_scale,
        })
    }

    pub fn rbf(lengthscale: f64, output_scale: f64) -> Result<Self> {
        Self::new(KernelFamily::Rbf, lengthscale, output_scale)
    }

    pub fn matern12(lengthscale: f64, output_scale: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern12, lengthscale, output_scale)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    /// `k(x, x2)`. Fails on non-finite coordinates or mismatched lengths.
    pub fn eval(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        if x.len() != x2.len() {
            return Err(Error::dims("kernel argument", x.len(), x2.len()));
        }
        if x.iter().chain(x2).any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(
                "kernel arguments must be finite".into(),
            ));
        }
        Ok(self.eval_unchecked(x, x2))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], x2: &[f64]) -> f64 {
        self.from_sq_dist(sq_dist(x, x2))
    }

    #[inline]
    fn from_sq_dist(&self, sq: f64) -> f64 {
        let o = self.output_scale;
        let l = self.lengthscale;
        match self.family {
            KernelFamily::Rbf => o * (-0.5 * sq / (l * l)).exp(),
            KernelFamily::Matern12 => o * (-sq.sqrt() / l).exp(),
            KernelFamily::Matern32 => {
                let a = 3f64.sqrt() * sq.sqrt() / l;
                o * (1.0 + a) * (-a).exp()
            }
            KernelFamily::Matern52 => {
                let a = 5f64.sqrt() * sq.sqrt() / l;
                o * (1.0 + a + a * a / 3.0) * (-a).exp()
            }
        }
    }

    /// Cross-covariance block `k(A, B)` between the rows of `a` (m×d) and
    /// `b` (p×d).
    pub fn cross_block(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if a.ncols() != b.ncols() {
            return Err(Error::dims("input dimension", a.ncols(), b.ncols()));
        }
        check_finite(a)?;
        check_finite(b)?;
        let ra = row_major(a);
        let rb = row_major(b);
        Ok(self.cross_rows(&ra, a.nrows(), &rb, b.nrows(), a.ncols()))
    }

    fn cross_rows(&self, ra: &[f64], m: usize, rb: &[f64], p: usize, d: usize) -> DMatrix<f64> {
        // filled column by column so each column is an independent task
        let mut out = DMatrix::zeros(m, p);
        if m == 0 || p == 0 {
            return out;
        }
        out.as_mut_slice()
            .par_chunks_mut(m)
            .enumerate()
            .for_each(|(j, col)| {
                let bj = &rb[j * d..(j + 1) * d];
                for (i, c) in col.iter_mut().enumerate() {
                    *c = self.eval_unchecked(&ra[i * d..(i + 1) * d], bj);
                }
            });
        out
    }
}

/// Squared Euclidean distance, guarded against negative round-off.
#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .max(0.0)
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument("inputs must be finite".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheMode {
    Dense,
    Blocked { block_rows: usize },
}

impl CacheMode {
    pub fn auto(n: usize) -> Self {
        if n <= DENSE_CACHE_LIMIT {
            CacheMode::Dense
        } else {
            CacheMode::Blocked {
                block_rows: DEFAULT_BLOCK_ROWS,
            }
        }
    }
}

/// The regularized kernel matrix `K̂ = k(X, X) + σ²I` over fixed training
/// inputs. Immutable after construction apart from the matvec counter.
pub struct KernelMatrix {
    kernel: KernelParams,
    inputs: DMatrix<f64>,
    rows: Vec<f64>,
    noise: f64,
    mode: CacheMode,
    dense: Option<DMatrix<f64>>,
    matvecs: AtomicUsize,
}

impl fmt::Debug for KernelMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelMatrix")
            .field("kernel", &self.kernel)
            .field("n", &self.n())
            .field("d", &self.dim())
            .field("noise", &self.noise)
            .field("mode", &self.mode)
            .finish()
    }
}

impl KernelMatrix {
    pub fn new(kernel: KernelParams, inputs: DMatrix<f64>, noise: f64) -> Result<Self> {
        let mode = CacheMode::auto(inputs.nrows());
        Self::with_cache_mode(kernel, inputs, noise, mode)
    }

    pub fn with_cache_mode(
        kernel: KernelParams,
        inputs: DMatrix<f64>,
        noise: f64,
        mode: CacheMode,
    ) -> Result<Self> {
        if !(noise.is_finite() && noise >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be finite and non-negative, got {noise}"
            )));
        }
        if let CacheMode::Blocked { block_rows } = mode {
            if block_rows == 0 {
                return Err(Error::InvalidArgument("block_rows must be positive".into()));
            }
        }
        check_finite(&inputs)?;
        let rows = row_major(&inputs);
        let mut handle = Self {
            kernel,
            inputs,
            rows,
            noise,
            mode,
            dense: None,
            matvecs: AtomicUsize::new(0),
        };
        if mode == CacheMode::Dense {
            handle.dense = Some(handle.assemble());
        }
        Ok(handle)
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn n(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn cache_mode(&self) -> CacheMode {
        self.mode
    }

    pub fn input_row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.rows[i * d..(i + 1) * d]
    }

    /// Number of `K̂`-matvecs served so far.
    pub fn matvec_count(&self) -> usize {
        self.matvecs.load(Ordering::Relaxed)
    }

    /// `K̂v`. Counted by [`matvec_count`](Self::matvec_count).
    pub fn matvec(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n();
        if v.len() != n {
            return Err(Error::dims("matvec operand", n, v.len()));
        }
        self.matvecs.fetch_add(1, Ordering::Relaxed);
        let mut out = DVector::zeros(n);
        match (&self.dense, self.mode) {
            (Some(dense), _) => {
                // K̂ is symmetric, so row i is column i (contiguous)
                out.as_mut_slice()
                    .par_iter_mut()
                    .enumerate()
                    .for_each(|(i, o)| *o = dense.column(i).dot(v));
            }
            (None, CacheMode::Blocked { block_rows }) => {
                let d = self.dim();
                out.as_mut_slice()
                    .par_chunks_mut(block_rows)
                    .enumerate()
                    .for_each(|(b, chunk)| {
                        let start = b * block_rows;
                        for (k, o) in chunk.iter_mut().enumerate() {
                            let i = start + k;
                            let xi = &self.rows[i * d..(i + 1) * d];
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += self
                                    .kernel
                                    .eval_unchecked(xi, &self.rows[j * d..(j + 1) * d])
                                    * v[j];
                            }
                            *o = acc + self.noise * v[i];
                        }
                    });
            }
            (None, CacheMode::Dense) => unreachable!("dense mode always caches"),
        }
        Ok(out)
    }

    /// Diagonal of `K̂`.
    pub fn diagonal(&self) -> DVector<f64> {
        match &self.dense {
            Some(dense) => dense.diagonal(),
            None => DVector::from_iterator(
                self.n(),
                (0..self.n()).map(|i| {
                    let xi = self.input_row(i);
                    self.kernel.eval_unchecked(xi, xi) + self.noise
                }),
            ),
        }
    }

    /// Materialized `K̂`; clones the cache in dense mode.
    pub fn dense(&self) -> DMatrix<f64> {
        match &self.dense {
            Some(dense) => dense.clone(),
            None => self.assemble(),
        }
    }

    fn assemble(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut k = self
            .kernel
            .cross_rows(&self.rows, n, &self.rows, n, self.dim());
        for i in 0..n {
            k[(i, i)] += self.noise;
        }
        k
    }

    /// `k(X, z)` for a single point `z` (no noise term).
    pub fn kernel_column(&self, z: &[f64]) -> Result<DVector<f64>> {
        if z.len() != self.dim() {
            return Err(Error::dims("query point", self.dim(), z.len()));
        }
        if z.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("query point must be finite".into()));
        }
        Ok(DVector::from_iterator(
            self.n(),
            (0..self.n()).map(|i| self.kernel.eval_unchecked(self.input_row(i), z)),
        ))
    }

    /// `k(Xq, X)` as a p×n matrix (no noise term).
    pub fn cross_from(&self, queries: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if queries.ncols() != self.dim() {
            return Err(Error::dims("query dimension", self.dim(), queries.ncols()));
        }
        check_finite(queries)?;
        let rq = row_major(queries);
        Ok(self
            .kernel
            .cross_rows(&rq, queries.nrows(), &self.rows, self.n(), self.dim()))
    }
}
