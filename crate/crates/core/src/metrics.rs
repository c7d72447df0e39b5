//! Test-set metrics.

use nalgebra::DVector;

use crate::error::{Error, Result};

pub fn rmse(mean: &DVector<f64>, truth: &DVector<f64>) -> Result<f64> {
    if mean.len() != truth.len() {
        return Err(Error::dims("predictions", truth.len(), mean.len()));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("rmse of an empty set".into()));
    }
    Ok(((mean - truth).norm_squared() / truth.len() as f64).sqrt())
}

/// Mean Gaussian negative log-likelihood, `½ log(2πv) + (y − m)²/(2v)`.
/// `variance` is the predictive variance of the noisy observation.
pub fn nll(mean: &DVector<f64>, variance: &DVector<f64>, truth: &DVector<f64>) -> Result<f64> {
    if mean.len() != truth.len() {
        return Err(Error::dims("predictions", truth.len(), mean.len()));
    }
    if variance.len() != truth.len() {
        return Err(Error::dims("variances", truth.len(), variance.len()));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("nll of an empty set".into()));
    }
    let mut total = 0.0;
    for ((m, v), y) in mean.iter().zip(variance.iter()).zip(truth.iter()) {
        if !(*v > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "predictive variance must be positive, got {v:e}"
            )));
        }
        total += 0.5 * (2.0 * std::f64::consts::PI * v).ln() + (y - m) * (y - m) / (2.0 * v);
    }
    Ok(total / truth.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let t = DVector::from_vec(vec![1.0, 2.0]);
        let m = DVector::from_vec(vec![2.0, 0.0]);
        assert!((rmse(&m, &t).unwrap() - 2.5f64.sqrt()).abs() < 1e-15);
        let v = DVector::from_element(2, 1.0);
        let want = 0.5 * (2.0 * std::f64::consts::PI).ln() + 0.25 * (1.0 + 4.0);
        assert!((nll(&m, &v, &t).unwrap() - want).abs() < 1e-14);
        assert!((nll(&t, &v, &t).unwrap() - 0.918_938_533_204_672_7).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        let t = DVector::from_element(2, 0.0);
        assert!(rmse(&DVector::zeros(3), &t).is_err());
        assert!(rmse(&DVector::zeros(0), &DVector::zeros(0)).is_err());
        assert!(nll(&t, &DVector::from_vec(vec![1.0, 0.0]), &t).is_err());
        assert!(nll(&t, &DVector::from_vec(vec![1.0, f64::NAN]), &t).is_err());
    }
}
