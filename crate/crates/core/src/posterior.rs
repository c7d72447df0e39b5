//! The combined posterior `GP(μ_i, k_i)`:
//!
//! ```text
//! μ_i(x)     = μ(x) + k(x, X) v_i
//! k_i(x, x') = k(x, x') − k(x, X) C_i k(X, x')
//! ```
//!
//! `k_i` is the sum of the mathematical posterior covariance and the
//! computational covariance `k(x, X)(K̂⁻¹ − C_i)k(X, x')`. Only the sum is
//! cheap; the split requires a dense solve and is gated behind an explicit
//! [`DenseOracle`] argument.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernels::KernelParams;
use crate::solver::LowRankPrecision;

#[derive(Clone, Default)]
pub enum PriorMean {
    #[default]
    Zero,
    Constant(f64),
    Function(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for PriorMean {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorMean::Zero => f.write_str("Zero"),
            PriorMean::Constant(c) => write!(f, "Constant({c})"),
            PriorMean::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl PriorMean {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            PriorMean::Zero => 0.0,
            PriorMean::Constant(c) => *c,
            PriorMean::Function(f) => f(x),
        }
    }

    /// Mean at every row of `x`.
    pub fn at_rows(&self, x: &DMatrix<f64>) -> DVector<f64> {
        match self {
            PriorMean::Zero => DVector::zeros(x.nrows()),
            PriorMean::Constant(c) => DVector::from_element(x.nrows(), *c),
            PriorMean::Function(f) => DVector::from_iterator(
                x.nrows(),
                x.row_iter().map(|r| {
                    let row: Vec<f64> = r.iter().copied().collect();
                    f(&row)
                }),
            ),
        }
    }
}

/// Dense access to `K̂⁻¹`, only available at test scale.
pub trait DenseOracle {
    /// `K̂⁻¹ rhs`.
    fn solve_khat(&self, rhs: &DVector<f64>) -> DVector<f64>;
}

/// Variance split at a single input. The mathematical and computational
/// parts are only known when a dense oracle was supplied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyBreakdown {
    pub combined: f64,
    pub mathematical: Option<f64>,
    pub computational: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CombinedPosterior {
    prior_mean: PriorMean,
    kernel: KernelParams,
    train_inputs: DMatrix<f64>,
    noise: f64,
    weights: DVector<f64>,
    precision: LowRankPrecision,
}

pub const SAMPLING_JITTER_START: f64 = 1e-10;
pub const SAMPLING_JITTER_MAX: f64 = 1e-6;

impl CombinedPosterior {
    pub fn new(
        prior_mean: PriorMean,
        kernel: KernelParams,
        train_inputs: DMatrix<f64>,
        noise: f64,
        weights: DVector<f64>,
        precision: LowRankPrecision,
    ) -> Result<Self> {
        let n = train_inputs.nrows();
        if weights.len() != n {
            return Err(Error::dims("representer weights", n, weights.len()));
        }
        if precision.n() != n {
            return Err(Error::dims("precision factors", n, precision.n()));
        }
        if !(noise.is_finite() && noise >= 0.0) {
            return Err(Error::InvalidArgument("noise must be non-negative".into()));
        }
        Ok(Self {
            prior_mean,
            kernel,
            train_inputs,
            noise,
            weights,
            precision,
        })
    }

    /// The prior itself: `v = 0`, `C = 0`.
    pub fn prior(prior_mean: PriorMean, kernel: KernelParams, train_inputs: DMatrix<f64>, noise: f64) -> Result<Self> {
        let n = train_inputs.nrows();
        Self::new(
            prior_mean,
            kernel,
            train_inputs,
            noise,
            DVector::zeros(n),
            LowRankPrecision::zeros(n),
        )
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn prior_mean(&self) -> &PriorMean {
        &self.prior_mean
    }

    pub fn train_inputs(&self) -> &DMatrix<f64> {
        &self.train_inputs
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn precision(&self) -> &LowRankPrecision {
        &self.precision
    }

    pub fn rank(&self) -> usize {
        self.precision.rank()
    }

    /// `k(Xq, X)`, p×n.
    pub fn cross(&self, queries: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.kernel.cross_block(queries, &self.train_inputs)
    }

    pub fn predict_mean(&self, queries: &DMatrix<f64>) -> Result<DVector<f64>> {
        let cross = self.cross(queries)?;
        Ok(self.prior_mean.at_rows(queries) + cross * &self.weights)
    }

    /// Joint combined covariance `k_i(Xq, Xq)`, O(p·n·i + p²·n).
    pub fn predict_cov(&self, queries: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let cross = self.cross(queries)?;
        let prior = self.kernel.cross_block(queries, queries)?;
        let g = self.scaled_projection(&cross);
        let mut cov = prior - &g * g.transpose();
        // exact symmetry
        let p = cov.nrows();
        for a in 0..p {
            for b in a + 1..p {
                let m = 0.5 * (cov[(a, b)] + cov[(b, a)]);
                cov[(a, b)] = m;
                cov[(b, a)] = m;
            }
        }
        Ok(cov)
    }

    /// Marginal latent variances `k_i(x, x)`, O(p·n·i).
    pub fn predict_var(&self, queries: &DMatrix<f64>) -> Result<DVector<f64>> {
        let cross = self.cross(queries)?;
        Ok(self.var_from_cross(queries, &cross))
    }

    /// Marginal predictive variances of noisy observations, `k_i(x, x) + σ²`.
    pub fn predict_observation_var(&self, queries: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(self.predict_var(queries)?.add_scalar(self.noise))
    }

    /// Mean and latent variance from a precomputed `k(Xq, X)`.
    pub fn predict_from_cross(
        &self,
        queries: &DMatrix<f64>,
        cross: &DMatrix<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        if cross.nrows() != queries.nrows() || cross.ncols() != self.train_inputs.nrows() {
            return Err(Error::InvalidArgument("cross-covariance block has wrong shape".into()));
        }
        let mean = self.prior_mean.at_rows(queries) + cross * &self.weights;
        Ok((mean, self.var_from_cross(queries, cross)))
    }

    fn var_from_cross(&self, queries: &DMatrix<f64>, cross: &DMatrix<f64>) -> DVector<f64> {
        let g = self.scaled_projection(cross);
        DVector::from_iterator(
            queries.nrows(),
            queries.row_iter().zip(g.row_iter()).map(|(q, gr)| {
                let q: Vec<f64> = q.iter().copied().collect();
                self.kernel.eval_unchecked(&q, &q) - gr.norm_squared()
            }),
        )
    }

    /// `k(Xq, X) D diag(η)^{-1/2}` so that `k(Xq,X) C k(X,Xq) = G Gᵀ`.
    fn scaled_projection(&self, cross: &DMatrix<f64>) -> DMatrix<f64> {
        let mut g = cross * self.precision.factors();
        for (mut col, &eta) in g.column_iter_mut().zip(self.precision.weights().iter()) {
            col /= eta.sqrt();
        }
        g
    }

    /// Split of the variance at `x` into mathematical and computational
    /// parts. Without an oracle only the combined variance is reported.
    pub fn decompose_variance(
        &self,
        x: &[f64],
        exact: Option<&dyn DenseOracle>,
    ) -> Result<UncertaintyBreakdown> {
        let q = DMatrix::from_row_slice(1, x.len(), x);
        let cross = self.cross(&q)?;
        let kx = cross.row(0).transpose();
        let prior = self.kernel.eval(x, x)?;
        let explained = kx.dot(&self.precision.apply(&kx)?);
        let combined = prior - explained;
        let Some(oracle) = exact else {
            return Ok(UncertaintyBreakdown {
                combined,
                mathematical: None,
                computational: None,
            });
        };
        let exact_explained = kx.dot(&oracle.solve_khat(&kx));
        Ok(UncertaintyBreakdown {
            combined,
            mathematical: Some(prior - exact_explained),
            computational: Some(exact_explained - explained),
        })
    }

    /// Draw `count` joint samples at `queries` by Matheron's rule:
    /// a prior draw plus `k(·, X) C_i (y − y′)`, where `y′` is the prior
    /// draw at the training inputs plus noise. Uses `C_i(y − μ) = v_i`, so
    /// the training targets are not needed. Returns a count×p matrix.
    pub fn sample_paths(
        &self,
        queries: &DMatrix<f64>,
        count: usize,
        seed: u64,
    ) -> Result<DMatrix<f64>> {
        let n = self.train_inputs.nrows();
        let p = queries.nrows();
        if queries.ncols() != self.train_inputs.ncols() {
            return Err(Error::dims(
                "query dimension",
                self.train_inputs.ncols(),
                queries.ncols(),
            ));
        }
        let mut all = DMatrix::zeros(n + p, queries.ncols());
        all.rows_mut(0, n).copy_from(&self.train_inputs);
        all.rows_mut(n, p).copy_from(queries);
        let joint = self.kernel.cross_block(&all, &all)?;
        let chol = jittered_cholesky(&joint, self.kernel.output_scale())?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DMatrix::from_fn(n + p, count, |_, _| StandardNormal.sample(&mut rng));
        let eps = DMatrix::from_fn(n, count, |_, _| {
            let e: f64 = StandardNormal.sample(&mut rng);
            e
        });
        let f = chol * z;
        // centered prior predictive draw y′ − μ(X)
        let y_prime = f.rows(0, n) + eps * self.noise.sqrt();
        let update = self.precision.apply_block(&y_prime.into_owned())?;
        let mut coeffs = -update;
        for mut col in coeffs.column_iter_mut() {
            col += &self.weights;
        }
        let cross = self.cross(queries)?;
        let mut paths = f.rows(n, p) + cross * coeffs;
        let mu = self.prior_mean.at_rows(queries);
        for mut col in paths.column_iter_mut() {
            col += &mu;
        }
        Ok(paths.transpose())
    }
}

/// Cholesky factor of `a + jitter·I`, starting at `1e-10·scale` and
/// escalating ×10 up to `1e-6·scale`.
pub fn jittered_cholesky(a: &DMatrix<f64>, scale: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut jitter = SAMPLING_JITTER_START;
    while jitter <= SAMPLING_JITTER_MAX * (1.0 + 1e-9) {
        let shifted = a + DMatrix::identity(n, n) * (jitter * scale);
        if let Some(chol) = shifted.cholesky() {
            return Ok(chol.l());
        }
        log::debug!("prior covariance not positive definite with jitter {jitter:e}, escalating");
        jitter *= 10.0;
    }
    Err(Error::Factorization(format!(
        "joint prior covariance of size {n} is not positive definite even with jitter {:e}",
        SAMPLING_JITTER_MAX * scale
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;

    fn points(n: usize, offset: f64) -> DMatrix<f64> {
        DMatrix::from_fn(n, 1, |i, _| offset + i as f64 * 0.37)
    }

    #[test]
    fn prior_posterior_reduces_to_prior() {
        let k = KernelParams::new(KernelFamily::Matern52, 0.8, 2.0).unwrap();
        let post = CombinedPosterior::prior(PriorMean::Constant(1.5), k, points(6, 0.0), 0.1).unwrap();
        let q = points(3, 0.1);
        assert_eq!(post.predict_mean(&q).unwrap(), DVector::from_element(3, 1.5));
        let cov = post.predict_cov(&q).unwrap();
        assert_eq!(cov, k.cross_block(&q, &q).unwrap());
        assert_eq!(post.predict_var(&q).unwrap(), DVector::from_element(3, 2.0));
        assert_eq!(post.predict_observation_var(&q).unwrap(), DVector::from_element(3, 2.1));
        let b = post.decompose_variance(&[0.2], None).unwrap();
        assert_eq!(b.combined, 2.0);
        assert!(b.mathematical.is_none());
    }

    #[test]
    fn dimension_checks() {
        let k = KernelParams::rbf(1.0, 1.0).unwrap();
        let post = CombinedPosterior::prior(PriorMean::Zero, k, points(4, 0.0), 0.1).unwrap();
        assert!(post.predict_mean(&DMatrix::zeros(2, 2)).is_err());
        assert!(post.predict_cov(&DMatrix::zeros(2, 3)).is_err());
        assert!(post.sample_paths(&DMatrix::zeros(2, 2), 3, 0).is_err());
        assert!(CombinedPosterior::new(PriorMean::Zero, k, points(4, 0.0), 0.1, DVector::zeros(3), LowRankPrecision::zeros(4)).is_err());
    }

    #[test]
    fn prior_sampling_is_reproducible() {
        let k = KernelParams::rbf(0.5, 1.0).unwrap();
        let post = CombinedPosterior::prior(PriorMean::Zero, k, points(5, 0.0), 0.1).unwrap();
        let q = points(3, 0.05);
        let a = post.sample_paths(&q, 10, 9).unwrap();
        let b = post.sample_paths(&q, 10, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), (10, 3));
        assert_ne!(a, post.sample_paths(&q, 10, 10).unwrap());
    }

    #[test]
    fn jitter_escalation_gives_up() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(jittered_cholesky(&bad, 1.0), Err(Error::Factorization(_))));
        let singular = DMatrix::from_element(3, 3, 1.0);
        assert!(jittered_cholesky(&singular, 1.0).is_ok());
    }
}
