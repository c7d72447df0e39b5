use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use itergp::kernels::KernelParams;
use itergp::posterior::{DenseOracle, PriorMean};

use crate::linalg::check_len;
use crate::{OracleError, Result};

/// Exact GP regression through a dense Cholesky factorization of `K̂`.
pub struct ExactGp {
    kernel: KernelParams,
    inputs: DMatrix<f64>,
    noise: f64,
    prior_mean: PriorMean,
    gram: DMatrix<f64>,
    khat: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
    v_star: DVector<f64>,
    spectrum_k: OnceLock<DVector<f64>>,
    spectrum_khat: OnceLock<DVector<f64>>,
}

impl std::fmt::Debug for ExactGp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExactGp")
            .field("n", &self.inputs.nrows())
            .field("noise", &self.noise)
            .field("jitter", &self.jitter)
            .finish()
    }
}

impl ExactGp {
    /// Factorizes `K̂ = K + σ²I`. If that fails, jitter starting at
    /// `1e-10·output_scale` is added and escalated ×10 up to `1e-6`.
    pub fn new(
        kernel: KernelParams,
        inputs: DMatrix<f64>,
        targets: &DVector<f64>,
        noise: f64,
        prior_mean: PriorMean,
    ) -> Result<Self> {
        let n = inputs.nrows();
        check_len("targets", n, targets.len())?;
        let gram = kernel.cross_block(&inputs, &inputs)?;
        let khat = &gram + DMatrix::identity(n, n) * noise;
        let mut jitter = 0.0;
        let chol = loop {
            let shifted = &khat + DMatrix::identity(n, n) * jitter;
            if let Some(ch) = shifted.cholesky() {
                break ch;
            }
            jitter = if jitter == 0.0 {
                1e-10 * kernel.output_scale()
            } else {
                jitter * 10.0
            };
            if jitter > 1e-6 * kernel.output_scale() * (1.0 + 1e-9) {
                return Err(OracleError::NotPositiveDefinite(format!(
                    "kernel matrix of size {n} even with jitter"
                )));
            }
            log::warn!("exact factorization failed, retrying with jitter {jitter:e}");
        };
        let centered = targets - prior_mean.at_rows(&inputs);
        let v_star = chol.solve(&centered);
        Ok(Self {
            kernel,
            inputs,
            noise,
            prior_mean,
            gram,
            khat,
            chol,
            jitter,
            v_star,
            spectrum_k: OnceLock::new(),
            spectrum_khat: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `K`, without noise.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `K̂ = K + σ²I`.
    pub fn khat(&self) -> &DMatrix<f64> {
        &self.khat
    }

    /// `v* = K̂⁻¹(y − μ)`.
    pub fn v_star(&self) -> &DVector<f64> {
        &self.v_star
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub fn khat_inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Ascending eigenvalues of `K`.
    pub fn spectrum_k(&self) -> &DVector<f64> {
        self.spectrum_k.get_or_init(|| sorted_ascending(&self.gram))
    }

    /// Ascending eigenvalues of `K̂`.
    pub fn spectrum_khat(&self) -> &DVector<f64> {
        self.spectrum_khat.get_or_init(|| sorted_ascending(&self.khat))
    }

    pub fn lambda_min_k(&self) -> f64 {
        self.spectrum_k()[0]
    }

    pub fn lambda_min_khat(&self) -> f64 {
        self.spectrum_khat()[0]
    }

    pub fn lambda_max_khat(&self) -> f64 {
        self.spectrum_khat()[self.n() - 1]
    }

    pub fn condition_khat(&self) -> f64 {
        self.lambda_max_khat() / self.lambda_min_khat()
    }

    /// Exact posterior mean and covariance at the rows of `queries`.
    pub fn exact_posterior(&self, queries: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let cross = self.kernel.cross_block(&self.inputs, queries)?;
        let mean = self.prior_mean.at_rows(queries) + cross.transpose() * &self.v_star;
        let half = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&cross)
            .ok_or_else(|| OracleError::NotPositiveDefinite("singular factor".into()))?;
        let prior = self.kernel.cross_block(queries, queries)?;
        let cov = prior - half.transpose() * half;
        Ok((mean, cov))
    }
}

fn sorted_ascending(a: &DMatrix<f64>) -> DVector<f64> {
    let mut ev: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    DVector::from_vec(ev)
}

impl DenseOracle for ExactGp {
    fn solve_khat(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.solve(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use itergp::kernels::KernelFamily;

    fn line(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, 1, |i, _| i as f64 * 0.3)
    }

    #[test]
    fn noiseless_interpolation() {
        let x = line(6);
        let y = DVector::from_fn(6, |i, _| (i as f64).cos());
        let gp = ExactGp::new(KernelParams::matern12(1.0, 1.0).unwrap(), x.clone(), &y, 0.0, PriorMean::Zero).unwrap();
        let (mean, cov) = gp.exact_posterior(&x).unwrap();
        assert!((mean - &y).amax() < 1e-8);
        assert!(cov.amax() < 1e-8);
        assert!(((gp.khat() * gp.v_star()) - &y).norm() <= 1e-10 * y.norm());
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let x = line(5);
        let y = DVector::from_element(5, 1.0);
        let k = KernelParams::rbf(0.2, 1.7).unwrap();
        let gp = ExactGp::new(k, x, &y, 0.1, PriorMean::Constant(0.5)).unwrap();
        let far = DMatrix::from_element(1, 1, 100.0);
        let (mean, cov) = gp.exact_posterior(&far).unwrap();
        assert!((mean[0] - 0.5).abs() < 1e-6);
        assert!((cov[(0, 0)] - 1.7).abs() < 1e-6);
    }

    #[test]
    fn spectra_are_shifted_by_noise() {
        let k = KernelParams::new(KernelFamily::Matern32, 0.5, 1.0).unwrap();
        let gp = ExactGp::new(k, line(8), &DVector::zeros(8), 0.25, PriorMean::Zero).unwrap();
        assert!((gp.lambda_min_khat() - gp.lambda_min_k() - 0.25).abs() < 1e-12);
        assert!(gp.condition_khat() >= 1.0);
    }

    #[test]
    fn singular_gram_gets_jitter_or_fails() {
        let x = DMatrix::from_element(3, 1, 0.5);
        let k = KernelParams::rbf(1.0, 1.0).unwrap();
        match ExactGp::new(k, x, &DVector::zeros(3), 0.0, PriorMean::Zero) {
            Ok(gp) => assert!(gp.jitter() > 0.0),
            Err(e) => assert!(matches!(e, OracleError::NotPositiveDefinite(_))),
        }
    }
}
