use nalgebra::{DMatrix, DVector};

use crate::{OracleError, Result};

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
pub fn sorted_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = a.clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..a.nrows()).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(idx.len(), idx.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_columns(
        &idx.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>(),
    );
    (values, vectors)
}

/// `λ_max / λ_min` of a symmetric positive definite matrix.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let ev = a.clone().symmetric_eigenvalues();
    ev.max() / ev.min()
}

/// Solve `a x = b` for symmetric `a`; falls back to the pseudo-inverse with
/// a warning when `a` is not numerically positive definite.
pub(crate) fn spd_solve_or_pinv(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    log::warn!("{what} is rank deficient, using the pseudo-inverse");
    let eps = 1e-12 * a.amax().max(f64::MIN_POSITIVE);
    let pinv = a
        .clone()
        .pseudo_inverse(eps)
        .map_err(|e| OracleError::NotPositiveDefinite(format!("{what}: {e}")))?;
    Ok(pinv * b)
}

pub(crate) fn check_len(what: &str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(OracleError::Dimension(format!(
            "{what}: expected {expected}, got {actual}"
        )));
    }
    Ok(())
}
