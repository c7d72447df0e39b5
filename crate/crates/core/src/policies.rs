//! Action-selection strategies. The sequence of actions `s_i` decides
//! which classical approximation the solver reproduces:
//!
//! | policy              | actions                 | classical analog        |
//! |---------------------|-------------------------|-------------------------|
//! | unit vectors        | `e_{j_i}`               | partial Cholesky        |
//! | residual            | `P̂⁻¹ r_{i−1}`           | preconditioned CG       |
//! | conjugate residual  | PCG search directions   | preconditioned CG       |
//! | pseudo-input        | `k(X, z_i)`             | Nyström / SoR / SVGP    |
//! | eigenvector         | eigenvectors of `K̂`     | truncated EVD           |

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;
use crate::solver::{solver_step, SolverOptions, SolverState};

/// Largest system for which the dense eigenvector policy is allowed.
pub const EIGEN_CAP: usize = 2_000;

pub trait Policy: Send {
    /// Next action, or `None` when the policy has nothing left to offer.
    fn next_action(
        &mut self,
        state: &SolverState,
        handle: &KernelMatrix,
    ) -> Result<Option<DVector<f64>>>;
}

/// Symmetric positive definite `P̂ ≈ K̂`, accessed through `v ↦ P̂⁻¹v`.
pub trait Preconditioner: Send + Sync + fmt::Debug {
    fn apply_inverse(&self, v: &DVector<f64>) -> DVector<f64>;
    fn rank(&self) -> usize;
    fn description(&self) -> String;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply_inverse(&self, v: &DVector<f64>) -> DVector<f64> {
        v.clone()
    }

    fn rank(&self) -> usize {
        0
    }

    fn description(&self) -> String {
        "identity".into()
    }
}

/// Jacobi preconditioner `P̂ = diag(K̂)`.
#[derive(Debug, Clone)]
pub struct DiagonalPreconditioner {
    inv_diag: DVector<f64>,
}

impl DiagonalPreconditioner {
    pub fn new(diag: &DVector<f64>) -> Result<Self> {
        if diag.iter().any(|&d| !(d.is_finite() && d > 0.0)) {
            return Err(Error::InvalidArgument(
                "diagonal preconditioner needs a positive diagonal".into(),
            ));
        }
        Ok(Self {
            inv_diag: diag.map(|d| 1.0 / d),
        })
    }

    pub fn from_kernel(handle: &KernelMatrix) -> Result<Self> {
        Self::new(&handle.diagonal())
    }
}

impl Preconditioner for DiagonalPreconditioner {
    fn apply_inverse(&self, v: &DVector<f64>) -> DVector<f64> {
        v.component_mul(&self.inv_diag)
    }

    fn rank(&self) -> usize {
        self.inv_diag.len()
    }

    fn description(&self) -> String {
        "diagonal".into()
    }
}

/// `P̂ = σ²I + UUᵀ`, inverted with the Woodbury identity in O(n·ℓ).
#[derive(Debug, Clone)]
pub struct LowRankPlusDiagonal {
    u: DMatrix<f64>,
    noise: f64,
    inner: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl LowRankPlusDiagonal {
    pub fn new(u: DMatrix<f64>, noise: f64) -> Result<Self> {
        if !(noise.is_finite() && noise > 0.0) {
            return Err(Error::InvalidArgument(
                "low-rank preconditioner needs a positive noise variance".into(),
            ));
        }
        let l = u.ncols();
        let gram = u.tr_mul(&u) + DMatrix::identity(l, l) * noise;
        let inner = gram
            .cholesky()
            .ok_or_else(|| Error::Factorization("preconditioner capacitance matrix".into()))?;
        Ok(Self { u, noise, inner })
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// `P̂v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        v * self.noise + &self.u * self.u.tr_mul(v)
    }
}

impl Preconditioner for LowRankPlusDiagonal {
    fn apply_inverse(&self, v: &DVector<f64>) -> DVector<f64> {
        let inner = self.inner.solve(&self.u.tr_mul(v));
        (v - &self.u * inner) / self.noise
    }

    fn rank(&self) -> usize {
        self.u.ncols()
    }

    fn description(&self) -> String {
        format!("partial-cholesky(rank={})", self.u.ncols())
    }
}

/// Diagonal-plus-low-rank preconditioner `P̂ = Q_ℓ + σ²I` from the
/// directions stored in `state`, `Q_ℓ = Σ_j (K̂d_j)(K̂d_j)ᵀ/η_j`.
/// With no stored directions the identity is returned.
pub fn build_partial_cholesky_preconditioner(
    state: &SolverState,
    noise: f64,
) -> Result<Arc<dyn Preconditioner>> {
    let dirs = state.directions();
    if dirs.is_empty() {
        return Ok(Arc::new(IdentityPreconditioner));
    }
    let mut u = DMatrix::zeros(state.n(), dirs.len());
    for (j, dir) in dirs.iter().enumerate() {
        u.set_column(j, &(&dir.khat_d / dir.eta.sqrt()));
    }
    Ok(Arc::new(LowRankPlusDiagonal::new(u, noise)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitVectorOrder {
    Natural,
    /// Greedy pivoting on the largest remaining diagonal of `K̂ − Q_{i−1}`.
    MaxResidualDiag,
}

/// Index of the largest diagonal entry of `K̂ − Q_i` among indices not yet
/// used as unit-vector actions; ties go to the lowest index. Recomputed
/// from the stored directions in O(n·i).
pub fn max_residual_diag_pivot(
    state: &SolverState,
    handle: &KernelMatrix,
    used: &[bool],
) -> Result<Option<usize>> {
    if used.len() != state.n() {
        return Err(Error::dims("used mask", state.n(), used.len()));
    }
    let mut diag = handle.diagonal();
    for dir in state.directions() {
        for (r, &kd) in diag.iter_mut().zip(dir.khat_d.iter()) {
            *r -= kd * kd / dir.eta;
        }
    }
    Ok(argmax_unused(&diag, used))
}

fn argmax_unused(diag: &DVector<f64>, used: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, (&val, &u)) in diag.iter().zip(used).enumerate() {
        if u {
            continue;
        }
        match best {
            Some((_, b)) if !(val > b) => {}
            _ => best = Some((j, val)),
        }
    }
    best.map(|(j, _)| j)
}

/// Unit-vector actions `e_{j_i}`: partial Cholesky.
#[derive(Debug, Clone)]
pub struct UnitVectorPolicy {
    order: UnitVectorOrder,
    used: Vec<bool>,
    pivots: Vec<usize>,
    remaining_diag: Option<DVector<f64>>,
    seen: usize,
}

impl UnitVectorPolicy {
    pub fn new(order: UnitVectorOrder) -> Self {
        Self {
            order,
            used: Vec::new(),
            pivots: Vec::new(),
            remaining_diag: None,
            seen: 0,
        }
    }

    /// Indices issued so far, in order.
    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }
}

impl Policy for UnitVectorPolicy {
    fn next_action(
        &mut self,
        state: &SolverState,
        handle: &KernelMatrix,
    ) -> Result<Option<DVector<f64>>> {
        let n = state.n();
        if self.used.len() != n {
            self.used = vec![false; n];
        }
        let pivot = match self.order {
            UnitVectorOrder::Natural => self.used.iter().position(|&u| !u),
            UnitVectorOrder::MaxResidualDiag => {
                let diag = self.remaining_diag.get_or_insert_with(|| handle.diagonal());
                for dir in &state.directions()[self.seen..] {
                    for (r, &kd) in diag.iter_mut().zip(dir.khat_d.iter()) {
                        *r -= kd * kd / dir.eta;
                    }
                }
                self.seen = state.directions().len();
                argmax_unused(diag, &self.used)
            }
        };
        Ok(pivot.map(|j| {
            self.used[j] = true;
            self.pivots.push(j);
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            e
        }))
    }
}

/// Preconditioned residual (gradient) actions `P̂⁻¹ r_{i−1}`.
#[derive(Debug, Clone)]
pub struct ResidualPolicy {
    preconditioner: Arc<dyn Preconditioner>,
    last_iteration: Option<usize>,
}

impl ResidualPolicy {
    pub fn new(preconditioner: Arc<dyn Preconditioner>) -> Self {
        Self {
            preconditioner,
            last_iteration: None,
        }
    }

    pub fn unpreconditioned() -> Self {
        Self::new(Arc::new(IdentityPreconditioner))
    }
}

impl Policy for ResidualPolicy {
    fn next_action(
        &mut self,
        state: &SolverState,
        _handle: &KernelMatrix,
    ) -> Result<Option<DVector<f64>>> {
        // asked twice at the same iteration: the previous action was
        // discarded and would only be issued again
        if self.last_iteration == Some(state.iteration()) {
            return Ok(None);
        }
        self.last_iteration = Some(state.iteration());
        let s = self.preconditioner.apply_inverse(state.residual());
        Ok((s.norm() > 0.0).then_some(s))
    }
}

/// Preconditioned CG search directions
/// `s_i = P̂⁻¹r_{i−1} − ((P̂⁻¹r_{i−1})ᵀK̂s_{i−1} / s_{i−1}ᵀK̂s_{i−1}) s_{i−1}`.
#[derive(Debug, Clone)]
pub struct ConjugateResidualPolicy {
    preconditioner: Arc<dyn Preconditioner>,
    last_iteration: Option<usize>,
    issued: Option<usize>,
}

impl ConjugateResidualPolicy {
    pub fn new(preconditioner: Arc<dyn Preconditioner>) -> Self {
        Self {
            preconditioner,
            last_iteration: None,
            issued: None,
        }
    }
}

impl Policy for ConjugateResidualPolicy {
    fn next_action(
        &mut self,
        state: &SolverState,
        _handle: &KernelMatrix,
    ) -> Result<Option<DVector<f64>>> {
        if self.last_iteration == Some(state.iteration()) {
            return Ok(None);
        }
        self.last_iteration = Some(state.iteration());
        let mut s = self.preconditioner.apply_inverse(state.residual());
        // the previous action is ours only if it was accepted last step
        if self.issued.map(|it| it + 1) == Some(state.iteration()) {
            if let Some((prev, khat_prev)) = state.last_action() {
                let beta = s.dot(khat_prev) / prev.dot(khat_prev);
                s.axpy(-beta, prev, 1.0);
            }
        }
        self.issued = Some(state.iteration());
        Ok((s.norm() > 0.0).then_some(s))
    }
}

/// Kernel columns at inducing points, `s_i = k(X, z_i)`.
#[derive(Debug, Clone)]
pub struct PseudoInputPolicy {
    inducing: DMatrix<f64>,
    next: usize,
}

impl PseudoInputPolicy {
    pub fn new(inducing: DMatrix<f64>) -> Result<Self> {
        let m = inducing.nrows();
        for a in 0..m {
            for b in a + 1..m {
                if inducing.row(a) == inducing.row(b) {
                    return Err(Error::InvalidArgument(format!(
                        "inducing points {a} and {b} coincide"
                    )));
                }
            }
        }
        Ok(Self { inducing, next: 0 })
    }

    pub fn inducing(&self) -> &DMatrix<f64> {
        &self.inducing
    }
}

impl Policy for PseudoInputPolicy {
    fn next_action(
        &mut self,
        _state: &SolverState,
        handle: &KernelMatrix,
    ) -> Result<Option<DVector<f64>>> {
        if self.next >= self.inducing.nrows() {
            return Ok(None);
        }
        let z: Vec<f64> = self.inducing.row(self.next).iter().copied().collect();
        self.next += 1;
        handle.kernel_column(&z).map(Some)
    }
}

/// Eigenvectors of `K̂` in order of descending eigenvalue.
#[derive(Debug, Clone, Default)]
pub struct EigenvectorPolicy {
    basis: Option<DMatrix<f64>>,
    next: usize,
}

impl EigenvectorPolicy {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Eigenpairs of `K̂`, eigenvalues descending.
pub fn sorted_eigenpairs(handle: &KernelMatrix) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = handle.n();
    if n > EIGEN_CAP {
        return Err(Error::InvalidArgument(format!(
            "eigenvector policy limited to n <= {EIGEN_CAP}, got {n}"
        )));
    }
    let eig = handle.dense().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&j| eig.eigenvalues[j]));
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(j));
    }
    Ok((values, vectors))
}

impl Policy for EigenvectorPolicy {
    fn next_action(
        &mut self,
        _state: &SolverState,
        handle: &KernelMatrix,
    ) -> Result<Option<DVector<f64>>> {
        if self.basis.is_none() {
            self.basis = Some(sorted_eigenpairs(handle)?.1);
        }
        let basis = self.basis.as_ref().expect("initialized above");
        if self.next >= basis.ncols() {
            return Ok(None);
        }
        let s = basis.column(self.next).into_owned();
        self.next += 1;
        Ok(Some(s))
    }
}

/// Seeded standard-normal actions; exhausted after `n` draws.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
    issued: usize,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            issued: 0,
        }
    }
}

impl Policy for RandomPolicy {
    fn next_action(
        &mut self,
        state: &SolverState,
        _handle: &KernelMatrix,
    ) -> Result<Option<DVector<f64>>> {
        if self.issued >= state.n() {
            return Ok(None);
        }
        self.issued += 1;
        let rng = &mut self.rng;
        Ok(Some(DVector::from_fn(state.n(), |_, _| {
            StandardNormal.sample(rng)
        })))
    }
}

/// Actions from `first` while fewer than `switch_at` steps are done, then
/// from `then`. With residual actions afterwards this is deflated CG.
pub struct MixedPolicy {
    first: Box<dyn Policy>,
    switch_at: usize,
    then: Box<dyn Policy>,
}

impl MixedPolicy {
    pub fn new(first: Box<dyn Policy>, switch_at: usize, then: Box<dyn Policy>) -> Self {
        Self {
            first,
            switch_at,
            then,
        }
    }
}

impl Policy for MixedPolicy {
    fn next_action(
        &mut self,
        state: &SolverState,
        handle: &KernelMatrix,
    ) -> Result<Option<DVector<f64>>> {
        if state.iteration() < self.switch_at {
            if let Some(s) = self.first.next_action(state, handle)? {
                return Ok(Some(s));
            }
        }
        self.then.next_action(state, handle)
    }
}

/// Fixed list of actions, issued in order.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    actions: Vec<DVector<f64>>,
    next: usize,
}

impl ScriptedPolicy {
    pub fn new(actions: Vec<DVector<f64>>) -> Self {
        Self { actions, next: 0 }
    }
}

impl Policy for ScriptedPolicy {
    fn next_action(
        &mut self,
        _state: &SolverState,
        _handle: &KernelMatrix,
    ) -> Result<Option<DVector<f64>>> {
        let s = self.actions.get(self.next).cloned();
        self.next += 1;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PreconditionerSpec {
    Identity,
    Diagonal,
    /// `Q_ℓ + σ²I` from `rank` greedy-pivoted unit-vector steps.
    PartialCholesky { rank: usize },
}

impl PreconditionerSpec {
    /// Build the preconditioner. Partial Cholesky spends `rank` matvecs.
    pub fn build(&self, handle: &KernelMatrix) -> Result<Arc<dyn Preconditioner>> {
        match self {
            PreconditionerSpec::Identity => Ok(Arc::new(IdentityPreconditioner)),
            PreconditionerSpec::Diagonal => Ok(Arc::new(DiagonalPreconditioner::from_kernel(handle)?)),
            PreconditionerSpec::PartialCholesky { rank } => {
                let state = partial_cholesky_state(handle, *rank)?;
                build_partial_cholesky_preconditioner(&state, handle.noise())
            }
        }
    }
}

/// Solver state after `rank` greedy-pivoted unit-vector steps on `K̂`. The
/// right-hand side is irrelevant to the directions, so zeros are used.
pub fn partial_cholesky_state(handle: &KernelMatrix, rank: usize) -> Result<SolverState> {
    let mut state = SolverState::new(DVector::zeros(handle.n()));
    let mut policy = UnitVectorPolicy::new(UnitVectorOrder::MaxResidualDiag);
    let options = SolverOptions::default();
    while state.iteration() < rank.min(handle.n()) {
        let Some(s) = policy.next_action(&state, handle)? else {
            break;
        };
        match solver_step(&mut state, handle, &s, &options) {
            Ok(_) | Err(Error::DegenerateAction { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq)]
pub enum InducingSpec {
    Points(DMatrix<f64>),
    /// `m` training inputs drawn uniformly without replacement.
    RandomSubset { m: usize },
    /// CSV file with one inducing point per row.
    File(PathBuf),
}

/// Configuration-level description of a policy.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    UnitVector(UnitVectorOrder),
    Residual(PreconditionerSpec),
    ConjugateResidual(PreconditionerSpec),
    PseudoInput(InducingSpec),
    Eigenvector,
    Random { seed: u64 },
    Mixed {
        first: Box<PolicyKind>,
        switch_at: usize,
        then: Box<PolicyKind>,
    },
}

/// `first` for the first `switch_at` iterations, `then` afterwards.
pub fn mixed_policy(first: PolicyKind, switch_at: usize, then: PolicyKind) -> PolicyKind {
    if switch_at == 0 {
        return then;
    }
    PolicyKind::Mixed {
        first: Box::new(first),
        switch_at,
        then: Box::new(then),
    }
}

/// Indices of `m` of `n` items drawn without replacement from `seed`.
pub fn random_subset_indices(n: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m > n {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {m} inducing points from {n} inputs"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, n, m).into_vec())
}

/// Rows of `inputs` selected by `random_subset_indices`.
pub fn random_inducing_points(inputs: &DMatrix<f64>, m: usize, seed: u64) -> Result<DMatrix<f64>> {
    let idx = random_subset_indices(inputs.nrows(), m, seed)?;
    Ok(inputs.select_rows(idx.iter()))
}

impl PolicyKind {
    /// Instantiate for a concrete system. `seed` drives any randomness not
    /// fixed by the kind itself (random inducing subsets).
    pub fn build(&self, handle: &KernelMatrix, seed: u64) -> Result<Box<dyn Policy>> {
        Ok(match self {
            PolicyKind::UnitVector(order) => Box::new(UnitVectorPolicy::new(*order)),
            PolicyKind::Residual(p) => Box::new(ResidualPolicy::new(p.build(handle)?)),
            PolicyKind::ConjugateResidual(p) => {
                Box::new(ConjugateResidualPolicy::new(p.build(handle)?))
            }
            PolicyKind::PseudoInput(spec) => {
                let z = match spec {
                    InducingSpec::Points(z) => z.clone(),
                    InducingSpec::RandomSubset { m } => {
                        random_inducing_points(handle.inputs(), *m, seed)?
                    }
                    InducingSpec::File(path) => crate::data::read_points_csv(path)?,
                };
                if z.ncols() != handle.dim() {
                    return Err(Error::dims("inducing point dimension", handle.dim(), z.ncols()));
                }
                Box::new(PseudoInputPolicy::new(z)?)
            }
            PolicyKind::Eigenvector => {
                if handle.n() > EIGEN_CAP {
                    return Err(Error::InvalidArgument(format!(
                        "eigenvector policy limited to n <= {EIGEN_CAP}"
                    )));
                }
                Box::new(EigenvectorPolicy::new())
            }
            PolicyKind::Random { seed } => Box::new(RandomPolicy::new(*seed)),
            PolicyKind::Mixed {
                first,
                switch_at,
                then,
            } => Box::new(MixedPolicy::new(
                first.build(handle, seed)?,
                *switch_at,
                then.build(handle, seed)?,
            )),
        })
    }

    /// Residual-driven policies stop producing actions once the residual
    /// vanishes.
    pub fn is_residual_based(&self) -> bool {
        matches!(
            self,
            PolicyKind::Residual(_) | PolicyKind::ConjugateResidual(_)
        )
    }
}

/// Parses the command-line policy codes: `chol`, `chol-pivoted`, `cg`,
/// `cg-precond:<ℓ>`, `pseudo-input:<m|path>`, `eig`, `random:<seed>`.
impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(code: &str) -> Result<Self> {
        let code = code.trim();
        let (head, arg) = match code.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (code, None),
        };
        let no_arg = |kind: PolicyKind| match arg {
            None => Ok(kind),
            Some(_) => Err(Error::Parse(format!("policy `{head}` takes no argument"))),
        };
        let count = |what: &str| -> Result<usize> {
            arg.ok_or_else(|| Error::Parse(format!("policy `{head}` needs {what}")))?
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("policy `{head}`: bad {what}: {e}")))
        };
        match head {
            "chol" => no_arg(PolicyKind::UnitVector(UnitVectorOrder::Natural)),
            "chol-pivoted" => no_arg(PolicyKind::UnitVector(UnitVectorOrder::MaxResidualDiag)),
            "cg" => no_arg(PolicyKind::Residual(PreconditionerSpec::Identity)),
            "cg-jacobi" => no_arg(PolicyKind::Residual(PreconditionerSpec::Diagonal)),
            "cg-conj" => no_arg(PolicyKind::ConjugateResidual(PreconditionerSpec::Identity)),
            "cg-precond" => Ok(PolicyKind::Residual(PreconditionerSpec::PartialCholesky {
                rank: count("a preconditioner rank")?,
            })),
            "eig" => no_arg(PolicyKind::Eigenvector),
            "random" => Ok(PolicyKind::Random {
                seed: arg
                    .ok_or_else(|| Error::Parse("policy `random` needs a seed".into()))?
                    .trim()
                    .parse::<u64>()
                    .map_err(|e| Error::Parse(format!("policy `random`: bad seed: {e}")))?,
            }),
            "pseudo-input" => {
                let arg = arg
                    .map(str::trim)
                    .filter(|a| !a.is_empty())
                    .ok_or_else(|| Error::Parse("policy `pseudo-input` needs <m|path>".into()))?;
                Ok(PolicyKind::PseudoInput(match arg.parse::<usize>() {
                    Ok(0) => {
                        return Err(Error::Parse(
                            "policy `pseudo-input` needs at least one inducing point".into(),
                        ))
                    }
                    Ok(m) => InducingSpec::RandomSubset { m },
                    Err(_) => InducingSpec::File(PathBuf::from(arg)),
                }))
            }
            _ => Err(Error::Parse(format!("unknown policy code `{code}`"))),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::UnitVector(UnitVectorOrder::Natural) => f.write_str("chol"),
            PolicyKind::UnitVector(UnitVectorOrder::MaxResidualDiag) => f.write_str("chol-pivoted"),
            PolicyKind::Residual(PreconditionerSpec::Identity) => f.write_str("cg"),
            PolicyKind::Residual(PreconditionerSpec::Diagonal) => f.write_str("cg-jacobi"),
            PolicyKind::Residual(PreconditionerSpec::PartialCholesky { rank }) => {
                write!(f, "cg-precond:{rank}")
            }
            PolicyKind::ConjugateResidual(PreconditionerSpec::Identity) => f.write_str("cg-conj"),
            PolicyKind::ConjugateResidual(p) => write!(f, "cg-conj({p:?})"),
            PolicyKind::PseudoInput(InducingSpec::RandomSubset { m }) => {
                write!(f, "pseudo-input:{m}")
            }
            PolicyKind::PseudoInput(InducingSpec::File(p)) => {
                write!(f, "pseudo-input:{}", p.display())
            }
            PolicyKind::PseudoInput(InducingSpec::Points(z)) => {
                write!(f, "pseudo-input({} points)", z.nrows())
            }
            PolicyKind::Eigenvector => f.write_str("eig"),
            PolicyKind::Random { seed } => write!(f, "random:{seed}"),
            PolicyKind::Mixed {
                first,
                switch_at,
                then,
            } => write!(f, "{first}@{switch_at}+{then}"),
        }
    }
}
