use nalgebra::{DMatrix, DVector};

use itergp::kernels::KernelParams;

use crate::linalg::{check_len, spd_solve_or_pinv};
use crate::Result;

/// Subset-of-regressors mean evaluated in two algebraically equal forms:
///
/// ```text
/// weights:    k(·,Z)(K_ZX K_XZ + σ²K_ZZ)⁻¹ K_ZX y
/// projected:  q(·,X) K_XZ (K_ZX (q(X,X) + σ²I) K_XZ)⁻¹ K_ZX y,   q(a,b) = k(a,Z)K_ZZ⁻¹k(Z,b)
/// ```
#[derive(Debug, Clone)]
pub struct SorMean {
    pub weights_form: DVector<f64>,
    pub projected_form: DVector<f64>,
}

impl SorMean {
    pub fn mean(&self) -> &DVector<f64> {
        &self.weights_form
    }

    pub fn max_abs_diff(&self) -> f64 {
        (&self.weights_form - &self.projected_form).amax()
    }
}

/// `y` is the centered target `y − μ(X)`; the result excludes the prior mean.
pub fn nystrom_sor_mean(
    kernel: &KernelParams,
    inputs: &DMatrix<f64>,
    y: &DVector<f64>,
    inducing: &DMatrix<f64>,
    noise: f64,
    queries: &DMatrix<f64>,
) -> Result<SorMean> {
    check_len("targets", inputs.nrows(), y.len())?;
    let kxz = kernel.cross_block(inputs, inducing)?;
    let kzz = kernel.cross_block(inducing, inducing)?;
    let kqz = kernel.cross_block(queries, inducing)?;
    let kzx_y = DMatrix::from_column_slice(inducing.nrows(), 1, (kxz.transpose() * y).as_slice());

    let system = kxz.transpose() * &kxz + &kzz * noise;
    let a = spd_solve_or_pinv(&system, &kzx_y, "K_ZX K_XZ + σ²K_ZZ")?;
    let weights_form = (&kqz * a).column(0).into_owned();

    let kzz_inv_kzx = spd_solve_or_pinv(&kzz, &kxz.transpose(), "K_ZZ")?;
    let q_xx = &kxz * &kzz_inv_kzx;
    let q_qx = &kqz * &kzz_inv_kzx;
    let n = inputs.nrows();
    let inner = kxz.transpose() * (q_xx + DMatrix::identity(n, n) * noise) * &kxz;
    let b = spd_solve_or_pinv(&inner, &kzx_y, "K_ZX (q(X,X) + σ²I) K_XZ")?;
    let projected_form = (q_qx * (&kxz * b)).column(0).into_owned();

    let out = SorMean {
        weights_form,
        projected_form,
    };
    let scale = out.weights_form.amax().max(1.0);
    if out.max_abs_diff() > 1e-8 * scale {
        log::warn!(
            "subset-of-regressors forms disagree by {:e}",
            out.max_abs_diff()
        );
    }
    Ok(out)
}

/// Mean after projecting the representer weights onto `span(K_XZ)`:
/// `k(·,X) K_XZ (K_ZX K̂ K_XZ)⁻¹ K_ZX y`.
pub fn pseudo_input_mean(
    kernel: &KernelParams,
    inputs: &DMatrix<f64>,
    y: &DVector<f64>,
    inducing: &DMatrix<f64>,
    noise: f64,
    queries: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    check_len("targets", inputs.nrows(), y.len())?;
    let n = inputs.nrows();
    let kxz = kernel.cross_block(inputs, inducing)?;
    let khat = kernel.cross_block(inputs, inputs)? + DMatrix::identity(n, n) * noise;
    let kqx = kernel.cross_block(queries, inputs)?;
    let kzx_y = DMatrix::from_column_slice(inducing.nrows(), 1, (kxz.transpose() * y).as_slice());
    let system = kxz.transpose() * khat * &kxz;
    let a = spd_solve_or_pinv(&system, &kzx_y, "K_ZX K̂ K_XZ")?;
    Ok((kqx * (&kxz * a)).column(0).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use itergp::kernels::KernelFamily;

    fn setup() -> (KernelParams, DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
        let k = KernelParams::new(KernelFamily::Matern52, 0.6, 1.2).unwrap();
        let x = DMatrix::from_fn(10, 2, |i, j| ((i * (j + 2)) % 7) as f64 * 0.25 - 0.7 + 0.01 * i as f64);
        let y = DVector::from_fn(10, |i, _| (0.7 * i as f64).sin());
        let q = DMatrix::from_fn(4, 2, |i, j| 0.3 * i as f64 - 0.2 * j as f64);
        (k, x, y, q)
    }

    fn exact_mean(k: &KernelParams, x: &DMatrix<f64>, y: &DVector<f64>, noise: f64, q: &DMatrix<f64>) -> DVector<f64> {
        let n = x.nrows();
        let khat = k.cross_block(x, x).unwrap() + DMatrix::identity(n, n) * noise;
        k.cross_block(q, x).unwrap() * khat.cholesky().unwrap().solve(y)
    }

    #[test]
    fn full_inducing_set_is_exact() {
        let (k, x, y, q) = setup();
        let exact = exact_mean(&k, &x, &y, 0.1, &q);
        let sor = nystrom_sor_mean(&k, &x, &y, &x, 0.1, &q).unwrap();
        assert!((sor.mean() - &exact).amax() < 1e-8);
        assert!(sor.max_abs_diff() < 1e-8);
        let pi = pseudo_input_mean(&k, &x, &y, &x, 0.1, &q).unwrap();
        assert!((pi - exact).amax() < 1e-8);
    }

    #[test]
    fn single_inducing_point_by_hand() {
        let (k, x, y, q) = setup();
        let z = x.rows(3, 1).into_owned();
        let kxz = k.cross_block(&x, &z).unwrap().column(0).into_owned();
        let kzz = k.output_scale();
        let kqz = k.cross_block(&q, &z).unwrap().column(0).into_owned();
        let noise = 0.05;
        let want = kqz * (kxz.dot(&y) / (kxz.dot(&kxz) + noise * kzz));
        let sor = nystrom_sor_mean(&k, &x, &y, &z, noise, &q).unwrap();
        assert!((sor.mean() - &want).amax() < 1e-12);
        assert!(sor.max_abs_diff() < 1e-10);
    }

    #[test]
    fn forms_agree_on_subsets() {
        let (k, x, y, q) = setup();
        let z = x.rows(0, 4).into_owned();
        let sor = nystrom_sor_mean(&k, &x, &y, &z, 0.1, &q).unwrap();
        assert!(sor.max_abs_diff() < 1e-8);
        let pi = pseudo_input_mean(&k, &x, &y, &z, 0.1, &q).unwrap();
        assert!((pi - sor.mean()).amax() > 1e-6);
    }

    #[test]
    fn duplicated_inducing_points_fall_back() {
        let (k, x, y, q) = setup();
        let mut z = DMatrix::zeros(2, 2);
        z.row_mut(0).copy_from(&x.row(1));
        z.row_mut(1).copy_from(&x.row(1));
        let sor = nystrom_sor_mean(&k, &x, &y, &z, 0.1, &q).unwrap();
        let single = nystrom_sor_mean(&k, &x, &y, &x.rows(1, 1).into_owned(), 0.1, &q).unwrap();
        assert!((sor.mean() - single.mean()).amax() < 1e-8);
    }
}
