use nalgebra::{DMatrix, DVector};

use crate::linalg::check_len;
use crate::{OracleError, Result};

/// Iterates, residuals and search directions of a CG run; `iterates[0]`
/// is the starting point.
#[derive(Debug, Clone, Default)]
pub struct PcgTrace {
    pub iterates: Vec<DVector<f64>>,
    pub residuals: Vec<DVector<f64>>,
    pub directions: Vec<DVector<f64>>,
}

/// Textbook preconditioned CG from `x₀ = 0`. `precond` applies `P̂⁻¹`.
/// Stops after `max_iter` iterations or once `‖r‖ < tol`.
pub fn classical_pcg(
    matvec: impl Fn(&DVector<f64>) -> DVector<f64>,
    b: &DVector<f64>,
    precond: impl Fn(&DVector<f64>) -> DVector<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<PcgTrace> {
    pcg(matvec, b, precond, max_iter, tol, false)
}

/// Preconditioned CG with full reorthogonalization: every new residual is
/// made `P̂⁻¹`-orthogonal to all previous ones (twice) before the next
/// direction is formed. Same iterates as [`classical_pcg`] in exact
/// arithmetic, without the loss of orthogonality in floating point.
pub fn classical_pcg_reorthogonalized(
    matvec: impl Fn(&DVector<f64>) -> DVector<f64>,
    b: &DVector<f64>,
    precond: impl Fn(&DVector<f64>) -> DVector<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<PcgTrace> {
    pcg(matvec, b, precond, max_iter, tol, true)
}

fn pcg(
    matvec: impl Fn(&DVector<f64>) -> DVector<f64>,
    b: &DVector<f64>,
    precond: impl Fn(&DVector<f64>) -> DVector<f64>,
    max_iter: usize,
    tol: f64,
    reorthogonalize: bool,
) -> Result<PcgTrace> {
    let n = b.len();
    let mut x = DVector::zeros(n);
    let mut r = b.clone();
    let mut z = precond(&r);
    check_len("preconditioned residual", n, z.len())?;
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    // previous (r_j, z_j, r_jᵀz_j) for reorthogonalization
    let mut basis: Vec<(DVector<f64>, DVector<f64>, f64)> = Vec::new();
    let mut trace = PcgTrace {
        iterates: vec![x.clone()],
        residuals: vec![r.clone()],
        directions: Vec::new(),
    };
    for it in 0..max_iter {
        if r.norm() < tol || r.norm() == 0.0 {
            break;
        }
        if reorthogonalize {
            basis.push((r.clone(), z.clone(), rz));
        }
        let ap = matvec(&p);
        check_len("matvec output", n, ap.len())?;
        let curv = p.dot(&ap);
        if !(curv > 0.0) {
            return Err(OracleError::ZeroCurvature(it));
        }
        let alpha = rz / curv;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        trace.directions.push(p.clone());
        trace.iterates.push(x.clone());
        z = precond(&r);
        if reorthogonalize {
            for _ in 0..2 {
                for (rj, zj, rzj) in &basis {
                    let c = zj.dot(&r) / rzj;
                    r.axpy(-c, rj, 1.0);
                    z.axpy(-c, zj, 1.0);
                }
            }
        }
        trace.residuals.push(r.clone());
        let rz_new = r.dot(&z);
        p = &z + &p * (rz_new / rz);
        rz = rz_new;
    }
    Ok(trace)
}

/// Deflated (preconditioned) CG with deflation subspace `span(W)`:
///
/// ```text
/// x₀ = W(WᵀAW)⁻¹Wᵀb,  r₀ = b − Ax₀,  z₀ = M⁻¹r₀
/// p₀ = z₀ − W(WᵀAW)⁻¹WᵀAz₀
/// α = rᵀz / pᵀAp,  x += αp,  r −= αAp,  z = M⁻¹r
/// β = r₊ᵀz₊ / rᵀz,  p = z + βp − W(WᵀAW)⁻¹WᵀAz
/// ```
pub fn deflated_cg(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    w: &DMatrix<f64>,
    precond: impl Fn(&DVector<f64>) -> DVector<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<PcgTrace> {
    deflated(a, b, w, precond, max_iter, tol, false)
}

/// [`deflated_cg`] with the residual reorthogonalization of
/// [`classical_pcg_reorthogonalized`].
pub fn deflated_cg_reorthogonalized(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    w: &DMatrix<f64>,
    precond: impl Fn(&DVector<f64>) -> DVector<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<PcgTrace> {
    deflated(a, b, w, precond, max_iter, tol, true)
}

fn deflated(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    w: &DMatrix<f64>,
    precond: impl Fn(&DVector<f64>) -> DVector<f64>,
    max_iter: usize,
    tol: f64,
    reorthogonalize: bool,
) -> Result<PcgTrace> {
    let n = b.len();
    check_len("matrix size", n, a.nrows())?;
    check_len("deflation basis rows", n, w.nrows())?;
    let aw = a * w;
    let wtaw = w.transpose() * &aw;
    let wtaw = wtaw
        .cholesky()
        .ok_or_else(|| OracleError::NotPositiveDefinite("WᵀAW".into()))?;
    // z ↦ W(WᵀAW)⁻¹WᵀAz, using WᵀA = (AW)ᵀ
    let project = |v: &DVector<f64>| w * wtaw.solve(&(aw.transpose() * v));

    let mut x = w * wtaw.solve(&(w.transpose() * b));
    let mut r = b - a * &x;
    let mut z = precond(&r);
    check_len("preconditioned residual", n, z.len())?;
    let mut p = &z - project(&z);
    let mut rz = r.dot(&z);
    let mut trace = PcgTrace {
        iterates: vec![x.clone()],
        residuals: vec![r.clone()],
        directions: Vec::new(),
    };
    let mut basis: Vec<(DVector<f64>, DVector<f64>, f64)> = Vec::new();
    for it in 0..max_iter {
        if r.norm() < tol || r.norm() == 0.0 {
            break;
        }
        if reorthogonalize {
            basis.push((r.clone(), z.clone(), rz));
        }
        let ap = a * &p;
        let curv = p.dot(&ap);
        if !(curv > 0.0) {
            return Err(OracleError::ZeroCurvature(it));
        }
        let alpha = rz / curv;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        trace.directions.push(p.clone());
        trace.iterates.push(x.clone());
        z = precond(&r);
        if reorthogonalize {
            for _ in 0..2 {
                for (rj, zj, rzj) in &basis {
                    let c = zj.dot(&r) / rzj;
                    r.axpy(-c, rj, 1.0);
                    z.axpy(-c, zj, 1.0);
                }
            }
        }
        trace.residuals.push(r.clone());
        let rz_new = r.dot(&z);
        p = &z + &p * (rz_new / rz) - project(&z);
        rz = rz_new;
    }
    Ok(trace)
}

/// Classical CG error envelope `2((√κ − 1)/(√κ + 1))^i` in the `A`-norm,
/// relative to the initial error.
pub fn cg_envelope(kappa: f64, i: usize) -> f64 {
    let s = kappa.sqrt();
    2.0 * ((s - 1.0) / (s + 1.0)).powi(i as i32)
}
