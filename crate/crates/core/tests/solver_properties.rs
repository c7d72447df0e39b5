//! Solver and policy invariants on random small systems, checked against
//! dense linear algebra.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use itergp::policies::{
    build_partial_cholesky_preconditioner, partial_cholesky_state, InducingSpec, Policy, PolicyKind,
    PreconditionerSpec, UnitVectorOrder,
};
use itergp::solver::{
    precision_matvec, relative_error_bound, run, solver_step, SolverOptions, SolverState, StoppingConfig,
};
use itergp::{Error, KernelFamily, KernelMatrix, KernelParams};

const FAMILIES: [KernelFamily; 4] = [
    KernelFamily::Rbf,
    KernelFamily::Matern12,
    KernelFamily::Matern32,
    KernelFamily::Matern52,
];

fn system(seed: u64, n: usize, family: usize, noise: f64) -> (KernelMatrix, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
    let y = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    let k = KernelParams::new(FAMILIES[family % 4], 0.6, 1.3).unwrap();
    (KernelMatrix::new(k, x, noise).unwrap(), y)
}

fn policy_kind(which: usize, n: usize, seed: u64) -> PolicyKind {
    match which % 6 {
        0 => PolicyKind::UnitVector(UnitVectorOrder::Natural),
        1 => PolicyKind::UnitVector(UnitVectorOrder::MaxResidualDiag),
        2 => PolicyKind::Residual(PreconditionerSpec::Identity),
        3 => PolicyKind::ConjugateResidual(PreconditionerSpec::Diagonal),
        4 => PolicyKind::PseudoInput(InducingSpec::RandomSubset { m: n }),
        _ => PolicyKind::Random { seed },
    }
}

fn solve(
    handle: &KernelMatrix,
    y: &DVector<f64>,
    kind: &PolicyKind,
    steps: usize,
    log_actions: bool,
) -> SolverState {
    let mut policy = kind.build(handle, 7).unwrap();
    let options = SolverOptions {
        log_actions,
        ..SolverOptions::default()
    };
    run(handle, y, policy.as_mut(), &StoppingConfig::budget(steps), &options)
        .unwrap()
        .state
}

fn khat_norm(khat: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(khat * v)).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn directions_are_conjugate(seed in any::<u64>(), n in 3usize..30, fam in 0usize..4, which in 0usize..6, noise in 1e-2f64..1.0) {
        let (h, y) = system(seed, n, fam, noise);
        let khat = h.dense();
        let state = solve(&h, &y, &policy_kind(which, n, seed), n, false);
        let dirs = state.directions();
        for a in 0..dirs.len() {
            for b in 0..a {
                let inner = dirs[a].d.dot(&(&khat * &dirs[b].d)).abs();
                let scale = khat_norm(&khat, &dirs[a].d) * khat_norm(&khat, &dirs[b].d);
                prop_assert!(inner <= 1e-6 * scale, "d{a}ᵀK̂d{b} = {inner:e}, scale {scale:e}");
            }
        }
    }

    #[test]
    fn projection_is_idempotent(seed in any::<u64>(), n in 3usize..20, fam in 0usize..4, which in 0usize..6, frac in 0.0f64..1.0) {
        let (h, y) = system(seed, n, fam, 0.05);
        let steps = ((n as f64) * frac) as usize;
        let state = solve(&h, &y, &policy_kind(which, n, seed), steps.max(1), false);
        let c = state.precision();
        let khat = h.dense();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let w = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let once = c.apply(&(&khat * &w)).unwrap();
        let twice = c.apply(&(&khat * &once)).unwrap();
        prop_assert!((twice - &once).norm() <= 1e-8 * w.norm());
        // C K̂ C = C
        let cd = c.to_dense();
        let err = (&cd * &khat * &cd - &cd).amax();
        prop_assert!(err <= 1e-8 * cd.amax().max(1.0), "CK̂C − C = {err:e}");
    }

    #[test]
    fn representer_identity_and_residual_consistency(seed in any::<u64>(), n in 2usize..30, fam in 0usize..4, which in 0usize..6, noise in 1e-2f64..1.0) {
        let (h, y) = system(seed, n, fam, noise);
        let state = solve(&h, &y, &policy_kind(which, n, seed), n / 2 + 1, false);
        let cy = precision_matvec(&state.precision(), &y).unwrap();
        prop_assert!((&cy - state.v()).amax() <= 1e-10 * state.v().amax().max(1.0));
        let fresh = &y - h.dense() * state.v();
        prop_assert!((fresh - state.residual()).norm() <= 1e-8 * y.norm());
        for dir in state.directions() {
            prop_assert!(dir.eta > 0.0);
        }
    }

    #[test]
    fn iterative_precision_equals_batch_form(seed in any::<u64>(), n in 2usize..40, fam in 0usize..4, which in 0usize..6, frac in 0.1f64..1.0) {
        // RBF kernel columns at inducing points are too collinear for the
        // explicit batch inverse
        let fam = if which == 4 { 1 } else { fam };
        let (h, y) = system(seed, n, fam, 0.1);
        let steps = (((n as f64) * frac) as usize).max(1);
        let state = solve(&h, &y, &policy_kind(which, n, seed), steps, true);
        let actions = state.actions().unwrap();
        prop_assume!(!actions.is_empty());
        let s = DMatrix::from_columns(actions);
        let gram = s.transpose() * h.dense() * &s;
        let batch = &s * gram.cholesky().unwrap().inverse() * s.transpose();
        let iterative = state.precision().to_dense();
        let err = (&iterative - &batch).amax();
        prop_assert!(err <= 1e-8 * batch.amax().max(1.0), "error {err:e}");
    }

    #[test]
    fn one_fresh_matvec_per_step(seed in any::<u64>(), n in 2usize..30, which in 0usize..6) {
        let (h, y) = system(seed, n, 0, 0.1);
        let mut policy = policy_kind(which, n, seed).build(&h, 3).unwrap();
        let mut state = SolverState::new(y);
        let options = SolverOptions::default();
        for _ in 0..n {
            let Some(s) = policy.next_action(&state, &h).unwrap() else { break };
            let before = h.matvec_count();
            match solver_step(&mut state, &h, &s, &options) {
                Ok(rec) => {
                    prop_assert_eq!(h.matvec_count() - before, 1);
                    prop_assert_eq!(rec.matvecs, 1);
                }
                Err(Error::DegenerateAction { .. }) => prop_assert_eq!(h.matvec_count() - before, 1),
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }
    }

    #[test]
    fn error_bound_is_relative_khat_error(seed in any::<u64>(), n in 2usize..25, fam in 0usize..4, which in 0usize..6, frac in 0.0f64..1.0) {
        let (h, y) = system(seed, n, fam, 0.05);
        let khat = h.dense();
        let v_star = khat.clone().cholesky().unwrap().solve(&y);
        let steps = ((n as f64) * frac) as usize;
        let state = if steps == 0 {
            SolverState::new(y.clone())
        } else {
            solve(&h, &y, &policy_kind(which, n, seed), steps, false)
        };
        let rho = relative_error_bound(&state.precision(), &h, &v_star).unwrap();
        prop_assert!((0.0..=1.0 + 1e-8).contains(&rho));
        let measured = khat_norm(&khat, &(&v_star - state.v())) / khat_norm(&khat, &v_star);
        prop_assert!((rho - measured).abs() <= 1e-8, "ρ {rho} vs measured {measured}");
        if steps == 0 {
            prop_assert!((rho - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn random_policy_is_reproducible(seed in any::<u64>(), n in 2usize..20) {
        let (h, y) = system(seed, n, 1, 0.1);
        let a = solve(&h, &y, &PolicyKind::Random { seed }, n, true);
        let b = solve(&h, &y, &PolicyKind::Random { seed }, n, true);
        prop_assert_eq!(a.actions().unwrap(), b.actions().unwrap());
        prop_assert_eq!(a.v(), b.v());
    }

    #[test]
    fn preconditioner_is_symmetric_positive_definite(seed in any::<u64>(), n in 3usize..30, rank in 0usize..10, noise in 1e-2f64..1.0) {
        let (h, _) = system(seed, n, 2, noise);
        let state = partial_cholesky_state(&h, rank.min(n)).unwrap();
        let p = build_partial_cholesky_preconditioner(&state, noise).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut probe = || DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let (u, w) = (probe(), probe());
        let (pu, pw) = (p.apply_inverse(&u), p.apply_inverse(&w));
        prop_assert!((u.dot(&pw) - w.dot(&pu)).abs() <= 1e-10 * u.norm() * pw.norm().max(pu.norm()));
        prop_assert!(u.dot(&pu) > 0.0);
        let lin = p.apply_inverse(&(&u * 2.0 - &w * 0.5));
        prop_assert!((lin - (pu * 2.0 - pw * 0.5)).norm() <= 1e-10 * (u.norm() + w.norm()) / noise);
    }
}

#[test]
fn unit_vectors_recover_the_solution() {
    let (h, y) = system(11, 20, 0, 0.01);
    let mut policy = PolicyKind::UnitVector(UnitVectorOrder::Natural).build(&h, 0).unwrap();
    let out = run(&h, &y, policy.as_mut(), &StoppingConfig::budget(20), &SolverOptions::default()).unwrap();
    assert_eq!(out.state.iteration(), 20);
    assert!(out.state.residual().norm() < 1e-8 * y.norm());
}

#[test]
fn residual_policy_error_decreases_monotonically() {
    let (h, y) = system(5, 30, 0, 0.01);
    let khat = h.dense();
    let v_star = khat.clone().cholesky().unwrap().solve(&y);
    let mut policy = PolicyKind::Residual(PreconditionerSpec::Identity).build(&h, 0).unwrap();
    let mut state = SolverState::new(y.clone());
    let initial = khat_norm(&khat, &v_star);
    let mut last = initial;
    let options = SolverOptions::default();
    // below ~1e-10 relative the error is roundoff in v*
    while last > 1e-10 * initial && state.iteration() < 60 {
        let Some(s) = policy.next_action(&state, &h).unwrap() else { break };
        if solver_step(&mut state, &h, &s, &options).is_err() {
            break;
        }
        let err = khat_norm(&khat, &(&v_star - state.v()));
        assert!(err <= last * (1.0 + 1e-12), "K̂-error rose from {last:e} to {err:e}");
        last = err;
    }
    assert!(last <= 1e-10 * initial);
    assert!(state.iteration() <= 30);
}

#[test]
fn full_rank_preconditioner_does_not_worsen_conditioning() {
    for seed in 0..5 {
        let n = 20;
        let (h, _) = system(seed, n, 1, 0.05);
        let khat = h.dense();
        let state = partial_cholesky_state(&h, n).unwrap();
        let p = build_partial_cholesky_preconditioner(&state, h.noise()).unwrap();
        let pinv = DMatrix::from_columns(&(0..n).map(|j| p.apply_inverse(&DVector::from_fn(n, |i, _| f64::from(u8::from(i == j))))).collect::<Vec<_>>());
        let pinv = (&pinv + pinv.transpose()) * 0.5;
        let g = pinv.clone().cholesky().unwrap().l();
        let m = g.transpose() * &khat * &g;
        let ev = m.symmetric_eigenvalues();
        let kev = khat.clone().symmetric_eigenvalues();
        let cond = ev.max() / ev.min();
        let cond_khat = kev.max() / kev.min();
        assert!(cond <= cond_khat, "κ(P̂⁻¹K̂) = {cond} > κ(K̂) = {cond_khat}");
        // P̂ P̂⁻¹ = I on probes: P̂ = Q + σ²I with Q = Σ (K̂d)(K̂d)ᵀ/η
        let mut q = DMatrix::identity(n, n) * h.noise();
        for dir in state.directions() {
            q += &dir.khat_d * dir.khat_d.transpose() / dir.eta;
        }
        assert!((q * &pinv - DMatrix::identity(n, n)).amax() < 1e-8);
    }
}

#[test]
fn pseudo_inputs_at_training_data_give_exact_mean() {
    let (h, y) = system(3, 25, 1, 0.05);
    let khat = h.dense();
    let v_star = khat.cholesky().unwrap().solve(&y);
    let kind = PolicyKind::PseudoInput(InducingSpec::Points(h.inputs().clone()));
    let state = solve(&h, &y, &kind, 25, false);
    assert!((state.v() - &v_star).norm() <= 1e-8 * v_star.norm());
}

#[test]
fn repeated_action_is_discarded_and_state_unchanged() {
    let (h, y) = system(1, 6, 0, 0.1);
    let mut state = SolverState::new(y);
    let s = DVector::from_fn(6, |i, _| i as f64 + 1.0);
    let options = SolverOptions::default();
    solver_step(&mut state, &h, &s, &options).unwrap();
    let snapshot = state.v().clone();
    assert!(matches!(solver_step(&mut state, &h, &s, &options), Err(Error::DegenerateAction { .. })));
    assert_eq!(state.v(), &snapshot);
    assert_eq!(state.iteration(), 1);
}

#[test]
fn mixed_policy_with_zero_switch_is_the_second_policy() {
    let first = PolicyKind::Random { seed: 1 };
    let then = PolicyKind::Residual(PreconditionerSpec::Identity);
    assert_eq!(itergp::policies::mixed_policy(first, 0, then.clone()), then);
}

#[test]
fn mixed_policy_zeroes_projected_residual_at_switch() {
    let (h, y) = system(9, 25, 2, 0.05);
    let kind = itergp::policies::mixed_policy(
        PolicyKind::UnitVector(UnitVectorOrder::Natural),
        3,
        PolicyKind::Residual(PreconditionerSpec::Identity),
    );
    let mut policy: Box<dyn Policy> = kind.build(&h, 0).unwrap();
    let state = run(&h, &y, policy.as_mut(), &StoppingConfig::budget(3), &SolverOptions::default())
        .unwrap()
        .state;
    for j in 0..3 {
        assert!(state.residual()[j].abs() <= 1e-10 * y.norm());
    }
}
