use nalgebra::{DMatrix, DVector};

use itergp::kernels::KernelParams;

use crate::linalg::check_len;
use crate::Result;

/// Gram matrix of `k^σ(x, x′) = k(x, x′) + σ²δ(x, x′)` over the rows of
/// `points`; δ is 1 for identical points.
pub fn noisy_gram(kernel: &KernelParams, points: &DMatrix<f64>, noise: f64) -> Result<DMatrix<f64>> {
    let mut g = kernel.cross_block(points, points)?;
    for i in 0..points.nrows() {
        for j in 0..points.nrows() {
            if points.row(i) == points.row(j) {
                g[(i, j)] += noise;
            }
        }
    }
    Ok(g)
}

/// Norm of `g = Σ c_j k^σ(·, p_j)` in the RKHS of `k^σ`: `√(cᵀK^σc)`.
pub fn rkhs_norm(coeffs: &DVector<f64>, points: &DMatrix<f64>, kernel: &KernelParams, noise: f64) -> Result<f64> {
    check_len("coefficients", points.nrows(), coeffs.len())?;
    let g = noisy_gram(kernel, points, noise)?;
    Ok(coeffs.dot(&(g * coeffs)).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atoms_zero_and_scaling() {
        let k = KernelParams::rbf(0.7, 1.5).unwrap();
        let p = DMatrix::from_row_slice(3, 1, &[0.0, 0.4, 1.1]);
        let mut e = DVector::zeros(3);
        e[1] = 1.0;
        assert!((rkhs_norm(&e, &p, &k, 0.2).unwrap() - 1.7f64.sqrt()).abs() < 1e-15);
        assert_eq!(rkhs_norm(&DVector::zeros(3), &p, &k, 0.2).unwrap(), 0.0);
        let c = DVector::from_vec(vec![0.3, -1.0, 0.5]);
        let a = rkhs_norm(&c, &p, &k, 0.2).unwrap();
        assert!((rkhs_norm(&(&c * 2.0), &p, &k, 0.2).unwrap() - 2.0 * a).abs() < 1e-14);
        assert!(rkhs_norm(&c, &p.rows(0, 2).into_owned(), &k, 0.2).is_err());
    }

    #[test]
    fn delta_applies_to_repeated_points() {
        let k = KernelParams::rbf(1.0, 1.0).unwrap();
        let p = DMatrix::from_row_slice(2, 1, &[0.5, 0.5]);
        let g = noisy_gram(&k, &p, 0.1).unwrap();
        assert_eq!(g, DMatrix::from_element(2, 2, 1.1));
    }
}
