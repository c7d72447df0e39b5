use nalgebra::DMatrix;

use crate::{OracleError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum PivotOrder {
    /// Pivot on rows in this order.
    Given(Vec<usize>),
    /// Largest remaining diagonal entry, lowest index on ties.
    Greedy,
}

/// Columns of a partial Cholesky factor in the original row ordering:
/// `L_i = factor.columns(0, i)` and `A ≈ L_i L_iᵀ`.
#[derive(Debug, Clone)]
pub struct PartialCholesky {
    pub factor: DMatrix<f64>,
    pub pivots: Vec<usize>,
}

impl PartialCholesky {
    pub fn leading(&self, i: usize) -> DMatrix<f64> {
        self.factor.columns(0, i).into_owned()
    }
}

/// Right-looking outer-product Cholesky: at each step take the pivot
/// column of the Schur complement, scale by the root of its diagonal and
/// subtract the rank-one update.
pub fn classical_partial_cholesky(a: &DMatrix<f64>, order: &PivotOrder, steps: usize) -> Result<PartialCholesky> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(OracleError::Dimension("matrix must be square".into()));
    }
    if steps > n {
        return Err(OracleError::Dimension(format!("{steps} steps exceed size {n}")));
    }
    if let PivotOrder::Given(p) = order {
        let mut seen = vec![false; n];
        for &i in p.iter().take(steps) {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(OracleError::Dimension("pivot order is not a permutation".into()));
            }
        }
        if p.len() < steps {
            return Err(OracleError::Dimension("pivot order too short".into()));
        }
    }
    let mut schur = a.clone();
    let mut factor = DMatrix::zeros(n, steps);
    let mut pivots = Vec::with_capacity(steps);
    let mut used = vec![false; n];
    for k in 0..steps {
        let p = match order {
            PivotOrder::Given(order) => order[k],
            PivotOrder::Greedy => {
                let mut best = None;
                for i in (0..n).filter(|&i| !used[i]) {
                    if best.is_none_or(|b: usize| schur[(i, i)] > schur[(b, b)]) {
                        best = Some(i);
                    }
                }
                best.expect("steps <= n")
            }
        };
        let pivot = schur[(p, p)];
        if !(pivot > 0.0) {
            return Err(OracleError::NonPositivePivot { step: k, value: pivot });
        }
        let col = schur.column(p) / pivot.sqrt();
        schur -= &col * col.transpose();
        factor.set_column(k, &col);
        used[p] = true;
        pivots.push(p);
    }
    Ok(PartialCholesky { factor, pivots })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.4);
        &b * b.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn one_by_one() {
        let a = DMatrix::from_element(1, 1, 4.0);
        let pc = classical_partial_cholesky(&a, &PivotOrder::Greedy, 1).unwrap();
        assert_eq!(pc.factor[(0, 0)], 2.0);
    }

    #[test]
    fn full_factorization_reconstructs() {
        let a = spd(7);
        for order in [PivotOrder::Greedy, PivotOrder::Given((0..7).rev().collect())] {
            let pc = classical_partial_cholesky(&a, &order, 7).unwrap();
            assert!((&pc.factor * pc.factor.transpose() - &a).amax() < 1e-10);
        }
    }

    #[test]
    fn natural_order_is_lower_triangular() {
        let a = spd(5);
        let pc = classical_partial_cholesky(&a, &PivotOrder::Given((0..5).collect()), 5).unwrap();
        let chol = a.cholesky().unwrap().l();
        assert!((pc.factor - chol).amax() < 1e-12);
    }

    #[test]
    fn remainder_stays_psd() {
        let a = spd(8);
        let pc = classical_partial_cholesky(&a, &PivotOrder::Greedy, 3).unwrap();
        let rest = &a - &pc.factor * pc.factor.transpose();
        assert!(rest.symmetric_eigenvalues().min() > -1e-12);
    }

    #[test]
    fn rejects_indefinite_and_bad_orders() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            classical_partial_cholesky(&a, &PivotOrder::Given(vec![0, 1]), 2),
            Err(OracleError::NonPositivePivot { step: 1, .. })
        ));
        assert!(classical_partial_cholesky(&a, &PivotOrder::Given(vec![0, 0]), 2).is_err());
        assert!(classical_partial_cholesky(&a, &PivotOrder::Greedy, 3).is_err());
    }
}
