//! The dense references against the iterative library on small problems.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use itergp::policies::{PolicyKind, PreconditionerSpec, UnitVectorOrder};
use itergp::solver::{run, SolverOptions, StoppingConfig};
use itergp::{IterGp, KernelFamily, KernelMatrix, KernelParams, PriorMean};
use itergp_oracles::{classical_partial_cholesky, classical_pcg_reorthogonalized, ExactGp, PivotOrder};

fn points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0f64..1.0))
}

#[test]
fn greedy_unit_vectors_follow_pivoted_cholesky() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let x = points(&mut rng, 15, 2);
    let y = DVector::from_fn(15, |_, _| rng.random_range(-1.0f64..1.0));
    let kernel = KernelParams::new(KernelFamily::Matern32, 0.4, 1.0).unwrap();
    let handle = KernelMatrix::new(kernel, x, 0.05).unwrap();
    let mut policy = PolicyKind::UnitVector(UnitVectorOrder::MaxResidualDiag).build(&handle, 0).unwrap();
    let out = run(&handle, &y, policy.as_mut(), &StoppingConfig::budget(15), &SolverOptions { log_actions: true, ..Default::default() }).unwrap();
    let picked: Vec<usize> = out
        .state
        .actions()
        .unwrap()
        .iter()
        .map(|a| a.iter().position(|&v| v == 1.0).unwrap())
        .collect();
    let reference = classical_partial_cholesky(&handle.dense(), &PivotOrder::Greedy, 15).unwrap();
    assert_eq!(picked, reference.pivots);
}

#[test]
fn cg_mean_matches_reference_after_ten_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let x = points(&mut rng, 25, 3);
    let y = DVector::from_fn(25, |i, _| x.row(i).sum().sin());
    let q = points(&mut rng, 7, 3);
    let kernel = KernelParams::rbf(0.9, 1.0).unwrap();
    let mut gp = IterGp::new(kernel, x.clone(), y.clone(), 0.1, PriorMean::Zero).unwrap();
    let mut policy = PolicyKind::Residual(PreconditionerSpec::Identity).build(gp.handle(), 0).unwrap();
    gp.run(policy.as_mut(), &StoppingConfig::budget(10)).unwrap();
    assert_eq!(gp.iteration(), 10);

    let khat = gp.handle().dense();
    let trace = classical_pcg_reorthogonalized(|v| &khat * v, &y, |r| r.clone(), 10, 0.0).unwrap();
    let reference = kernel.cross_block(&q, &x).unwrap() * trace.iterates.last().unwrap();
    let mean = gp.posterior().predict_mean(&q).unwrap();
    assert!((mean - reference).amax() <= 1e-10);
}

#[test]
fn exact_gp_interpolates_without_noise_and_reverts_far_away() {
    let x = DMatrix::from_row_slice(4, 1, &[0.0, 0.5, 1.0, 1.5]);
    let y = DVector::from_vec(vec![1.0, -0.5, 0.25, 2.0]);
    let kernel = KernelParams::matern12(0.5, 1.3).unwrap();
    let exact = ExactGp::new(kernel, x.clone(), &y, 0.0, PriorMean::Constant(0.4)).unwrap();
    assert_eq!(exact.jitter(), 0.0);
    let (mean, cov) = exact.exact_posterior(&x).unwrap();
    assert!((mean - &y).amax() < 1e-10);
    assert!(cov.diagonal().amax() < 1e-10);

    let far = DMatrix::from_row_slice(1, 1, &[1e3]);
    let (mean, cov) = exact.exact_posterior(&far).unwrap();
    assert!((mean[0] - 0.4).abs() < 1e-12);
    assert!((cov[(0, 0)] - 1.3).abs() < 1e-12);
}

#[test]
fn representer_weights_reproduce_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = points(&mut rng, 30, 2);
    let y = DVector::from_fn(30, |_, _| rng.random_range(-1.0f64..1.0));
    let kernel = KernelParams::rbf(0.5, 1.0).unwrap();
    let exact = ExactGp::new(kernel, x, &y, 0.01, PriorMean::Zero).unwrap();
    let fitted = exact.khat() * exact.v_star();
    assert!((fitted - y).amax() < 1e-9);
}
