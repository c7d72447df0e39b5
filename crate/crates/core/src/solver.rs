//! The probabilistic linear solver that drives every IterGP variant.
//!
//! Each step observes the residual along an action `s_i`, turns the action
//! into a `K̂`-conjugate search direction `d_i = (I − C_{i−1}K̂)s_i` and
//! updates the representer-weight estimate `v_i` together with the
//! low-rank precision approximation `C_i = Σ_j d_j d_jᵀ / η_j`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;
use crate::policies::Policy;

/// Give up after this many consecutive discarded actions.
pub const MAX_CONSECUTIVE_DISCARDS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingConfig {
    pub max_iterations: usize,
    pub abstol: f64,
    pub reltol: f64,
}

impl StoppingConfig {
    pub fn new(max_iterations: usize, abstol: f64, reltol: f64) -> Result<Self> {
        if max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        if !(abstol >= 0.0 && reltol >= 0.0) {
            return Err(Error::InvalidArgument(
                "abstol and reltol must be non-negative".into(),
            ));
        }
        Ok(Self {
            max_iterations,
            abstol,
            reltol,
        })
    }

    /// Stop only on the iteration budget.
    pub fn budget(max_iterations: usize) -> Self {
        Self {
            max_iterations,
            abstol: 0.0,
            reltol: 0.0,
        }
    }

    fn threshold(&self, target_norm: f64) -> f64 {
        (self.reltol * target_norm).max(self.abstol)
    }
}

impl Default for StoppingConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            abstol: 0.0,
            reltol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Discard an action when `η ≤ breakdown_tol · sᵀK̂s`.
    pub breakdown_tol: f64,
    /// Second Gram–Schmidt pass while fewer than this many directions are stored.
    pub reorthogonalize_below: usize,
    /// Recompute the residual from `v` every this many steps (0 disables).
    pub residual_refresh_every: usize,
    pub log_actions: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            breakdown_tol: 1e-12,
            reorthogonalize_below: 500,
            residual_refresh_every: 50,
            log_actions: false,
        }
    }
}

/// A stored search direction with its normalizer and cached `K̂d`.
#[derive(Debug, Clone)]
pub struct Direction {
    pub d: DVector<f64>,
    pub eta: f64,
    pub khat_d: DVector<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub iteration: usize,
    pub alpha: f64,
    pub eta: f64,
    pub residual_norm: f64,
    /// Fresh `K̂`-matvecs consumed by this step.
    pub matvecs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    PolicyExhausted,
    Breakdown,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::MaxIterations => "max_iterations",
            StopReason::PolicyExhausted => "policy_exhausted",
            StopReason::Breakdown => "breakdown",
        }
    }
}

/// Belief over the representer weights after `iteration` steps.
#[derive(Debug, Clone)]
pub struct SolverState {
    target: DVector<f64>,
    target_norm: f64,
    v: DVector<f64>,
    residual: DVector<f64>,
    directions: Vec<Direction>,
    iteration: usize,
    actions: Option<Vec<DVector<f64>>>,
    last_action: Option<(DVector<f64>, DVector<f64>)>,
}

impl SolverState {
    /// Prior belief `v_0 = 0`, `C_0 = 0` for the system `K̂v = target`.
    pub fn new(target: DVector<f64>) -> Self {
        Self::with_action_log(target, false)
    }

    pub fn with_action_log(target: DVector<f64>, log_actions: bool) -> Self {
        let n = target.len();
        Self {
            target_norm: target.norm(),
            residual: target.clone(),
            target,
            v: DVector::zeros(n),
            directions: Vec::new(),
            iteration: 0,
            actions: log_actions.then(Vec::new),
            last_action: None,
        }
    }

    pub fn n(&self) -> usize {
        self.target.len()
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    pub fn v(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn residual(&self) -> &DVector<f64> {
        &self.residual
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn actions(&self) -> Option<&[DVector<f64>]> {
        self.actions.as_deref()
    }

    /// The most recent accepted action and its product `K̂s`.
    pub fn last_action(&self) -> Option<(&DVector<f64>, &DVector<f64>)> {
        self.last_action.as_ref().map(|(s, ks)| (s, ks))
    }

    /// Snapshot of `C_i` in factored form.
    pub fn precision(&self) -> LowRankPrecision {
        let n = self.n();
        let i = self.directions.len();
        let mut factors = DMatrix::zeros(n, i);
        for (j, dir) in self.directions.iter().enumerate() {
            factors.set_column(j, &dir.d);
        }
        let weights = DVector::from_iterator(i, self.directions.iter().map(|d| d.eta));
        LowRankPrecision { factors, weights }
    }

    /// `C_i w` without taking a snapshot.
    pub fn apply_precision(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        if w.len() != self.n() {
            return Err(Error::dims("precision operand", self.n(), w.len()));
        }
        let mut out = DVector::zeros(self.n());
        for dir in &self.directions {
            out.axpy(dir.d.dot(w) / dir.eta, &dir.d, 1.0);
        }
        Ok(out)
    }

    /// `Q_i w = Σ_j (K̂d_j)(K̂d_j)ᵀw / η_j`, the implied approximation of `K̂`.
    pub fn apply_kernel_approximation(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        if w.len() != self.n() {
            return Err(Error::dims("approximation operand", self.n(), w.len()));
        }
        let mut out = DVector::zeros(self.n());
        for dir in &self.directions {
            out.axpy(dir.khat_d.dot(w) / dir.eta, &dir.khat_d, 1.0);
        }
        Ok(out)
    }

    /// Replace the incrementally updated residual by `target − K̂v`.
    pub fn refresh_residual(&mut self, handle: &KernelMatrix) -> Result<()> {
        let kv = handle.matvec(&self.v)?;
        self.residual = &self.target - kv;
        Ok(())
    }

    /// Zero-pad every stored vector to length `n + extra`. `residual_tail`
    /// is the residual of the appended block, `(y′ − μ′) − K̂₂₁v`, and
    /// `khat_d_tails[j]` is the appended block of `K̂[d_j; 0]`.
    pub(crate) fn pad(
        &self,
        target_tail: &DVector<f64>,
        residual_tail: &DVector<f64>,
        khat_d_tails: &[DVector<f64>],
    ) -> SolverState {
        let extra = target_tail.len();
        let stack = |a: &DVector<f64>, b: &DVector<f64>| {
            DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
        };
        let zeros = DVector::zeros(extra);
        let target = stack(&self.target, target_tail);
        SolverState {
            target_norm: target.norm(),
            target,
            v: stack(&self.v, &zeros),
            residual: stack(&self.residual, residual_tail),
            directions: self
                .directions
                .iter()
                .zip(khat_d_tails)
                .map(|(dir, tail)| Direction {
                    d: stack(&dir.d, &zeros),
                    eta: dir.eta,
                    khat_d: stack(&dir.khat_d, tail),
                })
                .collect(),
            iteration: self.iteration,
            actions: self
                .actions
                .as_ref()
                .map(|acts| acts.iter().map(|s| stack(s, &zeros)).collect()),
            last_action: None,
        }
    }
}

/// Factored `C = D diag(η)⁻¹ Dᵀ`, an approximation of `K̂⁻¹` of rank `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankPrecision {
    factors: DMatrix<f64>,
    weights: DVector<f64>,
}

impl LowRankPrecision {
    pub fn new(factors: DMatrix<f64>, weights: DVector<f64>) -> Result<Self> {
        if factors.ncols() != weights.len() {
            return Err(Error::dims("precision weights", factors.ncols(), weights.len()));
        }
        if weights.iter().any(|&w| !(w.is_finite() && w > 0.0)) {
            return Err(Error::InvalidArgument(
                "precision weights must be positive".into(),
            ));
        }
        Ok(Self { factors, weights })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            factors: DMatrix::zeros(n, 0),
            weights: DVector::zeros(0),
        }
    }

    pub fn n(&self) -> usize {
        self.factors.nrows()
    }

    pub fn rank(&self) -> usize {
        self.factors.ncols()
    }

    pub fn factors(&self) -> &DMatrix<f64> {
        &self.factors
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// `C w = Σ_j (d_jᵀw / η_j) d_j`, O(n·i).
    pub fn apply(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        if w.len() != self.n() {
            return Err(Error::dims("precision operand", self.n(), w.len()));
        }
        let coeffs = self.factors.tr_mul(w).component_div(&self.weights);
        Ok(&self.factors * coeffs)
    }

    /// `C W` for a block of columns.
    pub fn apply_block(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if w.nrows() != self.n() {
            return Err(Error::dims("precision operand rows", self.n(), w.nrows()));
        }
        let mut coeffs = self.factors.tr_mul(w);
        for (mut row, &eta) in coeffs.row_iter_mut().zip(self.weights.iter()) {
            row /= eta;
        }
        Ok(&self.factors * coeffs)
    }

    /// Dense `C` (test scale only).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut scaled = self.factors.clone();
        for (mut col, &eta) in scaled.column_iter_mut().zip(self.weights.iter()) {
            col /= eta;
        }
        scaled * self.factors.transpose()
    }

    /// Append zero rows so the factors act on an extended system.
    pub fn padded(&self, extra: usize) -> Self {
        let n = self.n();
        let mut factors = DMatrix::zeros(n + extra, self.rank());
        factors.rows_mut(0, n).copy_from(&self.factors);
        Self {
            factors,
            weights: self.weights.clone(),
        }
    }
}

/// `C w`; free-function form of [`LowRankPrecision::apply`].
pub fn precision_matvec(c: &LowRankPrecision, w: &DVector<f64>) -> Result<DVector<f64>> {
    c.apply(w)
}

/// One iteration of the solver: orthogonalize the action, observe the
/// residual along the direction and update the belief. Consumes exactly
/// one `K̂`-matvec, plus one more on steps where the residual is
/// recomputed from scratch.
///
/// On [`Error::DegenerateAction`] the state is unchanged.
pub fn solver_step(
    state: &mut SolverState,
    handle: &KernelMatrix,
    action: &DVector<f64>,
    options: &SolverOptions,
) -> Result<StepRecord> {
    let n = state.n();
    if handle.n() != n {
        return Err(Error::dims("kernel matrix", n, handle.n()));
    }
    if action.len() != n {
        return Err(Error::dims("action", n, action.len()));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidArgument("action must be finite".into()));
    }
    if action.norm() == 0.0 {
        return Err(Error::InvalidArgument("action must be nonzero".into()));
    }

    let before = handle.matvec_count();
    // d = (I − C K̂) s using the cached K̂d_j; `coeffs` accumulates both
    // passes so that K̂s can be rebuilt without a second matvec.
    let mut d = action.clone();
    let mut coeffs = vec![0.0; state.directions.len()];
    let passes = if state.directions.len() < options.reorthogonalize_below { 2 } else { 1 };
    for _ in 0..passes {
        for (c_total, dir) in coeffs.iter_mut().zip(&state.directions) {
            let c = dir.khat_d.dot(&d) / dir.eta;
            d.axpy(-c, &dir.d, 1.0);
            *c_total += c;
        }
    }
    let khat_d = handle.matvec(&d)?;
    let mut khat_s = khat_d.clone();
    for (c, dir) in coeffs.iter().zip(&state.directions) {
        khat_s.axpy(*c, &dir.khat_d, 1.0);
    }
    let s_khat_s = action.dot(&khat_s);

    // dᵀK̂d and dᵀr equal sᵀK̂d and sᵀr in exact arithmetic; the d-forms
    // keep each step an exact line search once orthogonality degrades.
    let eta = d.dot(&khat_d);
    let threshold = options.breakdown_tol * s_khat_s.abs();
    if !(eta > threshold) || !eta.is_finite() {
        return Err(Error::DegenerateAction { eta, threshold });
    }

    let alpha = d.dot(&state.residual);
    let step = alpha / eta;
    state.v.axpy(step, &d, 1.0);
    state.residual.axpy(-step, &khat_d, 1.0);
    state.directions.push(Direction { d, eta, khat_d });
    state.iteration += 1;
    if let Some(log) = state.actions.as_mut() {
        log.push(action.clone());
    }
    state.last_action = Some((action.clone(), khat_s));

    if options.residual_refresh_every > 0 && state.iteration % options.residual_refresh_every == 0 {
        state.refresh_residual(handle)?;
    }

    Ok(StepRecord {
        iteration: state.iteration,
        alpha,
        eta,
        residual_norm: state.residual.norm(),
        matvecs: handle.matvec_count() - before,
    })
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: SolverState,
    pub trace: Vec<StepRecord>,
    pub stop_reason: StopReason,
}

impl RunOutcome {
    pub fn precision(&self) -> LowRankPrecision {
        self.state.precision()
    }
}

/// Run the solver from the prior belief until the stopping rule fires.
pub fn run(
    handle: &KernelMatrix,
    target: &DVector<f64>,
    policy: &mut dyn Policy,
    stopping: &StoppingConfig,
    options: &SolverOptions,
) -> Result<RunOutcome> {
    if target.len() != handle.n() {
        return Err(Error::dims("target", handle.n(), target.len()));
    }
    let mut state = SolverState::with_action_log(target.clone(), options.log_actions);
    let mut trace = Vec::new();
    let stop_reason = continue_run(&mut state, handle, policy, stopping, options, &mut trace)?;
    Ok(RunOutcome {
        state,
        trace,
        stop_reason,
    })
}

/// Advance an existing state until `stopping.max_iterations` total
/// iterations, convergence, or policy exhaustion.
pub fn continue_run(
    state: &mut SolverState,
    handle: &KernelMatrix,
    policy: &mut dyn Policy,
    stopping: &StoppingConfig,
    options: &SolverOptions,
    trace: &mut Vec<StepRecord>,
) -> Result<StopReason> {
    let threshold = stopping.threshold(state.target_norm);
    let mut discarded = 0;
    loop {
        let rnorm = state.residual.norm();
        if rnorm < threshold || rnorm == 0.0 {
            return Ok(StopReason::Converged);
        }
        if state.iteration >= stopping.max_iterations {
            return Ok(StopReason::MaxIterations);
        }
        let Some(action) = policy.next_action(state, handle)? else {
            return Ok(StopReason::PolicyExhausted);
        };
        match solver_step(state, handle, &action, options) {
            Ok(record) => {
                discarded = 0;
                trace.push(record);
            }
            Err(Error::DegenerateAction { eta, threshold }) => {
                log::debug!(
                    "discarding action at iteration {}: eta {eta:e} <= {threshold:e}",
                    state.iteration
                );
                discarded += 1;
                if discarded >= MAX_CONSECUTIVE_DISCARDS {
                    return Ok(StopReason::Breakdown);
                }
            }
            Err(e) => return Err(e),
        }
    }
}

/// `ρ(i) = ‖(I − C K̂) v̄*‖_K̂` with `v̄* = v*/‖v*‖_K̂`, the relative
/// `K̂`-norm error of `v_i = C K̂ v*`. Test-time diagnostic: needs `v*`.
pub fn relative_error_bound(
    c: &LowRankPrecision,
    handle: &KernelMatrix,
    v_star: &DVector<f64>,
) -> Result<f64> {
    if v_star.len() != handle.n() {
        return Err(Error::dims("v_star", handle.n(), v_star.len()));
    }
    let kv = handle.matvec(v_star)?;
    let sq = v_star.dot(&kv);
    if !(sq > 0.0) {
        return Err(Error::InvalidArgument(
            "relative error bound undefined for zero v_star".into(),
        ));
    }
    // the error vector form avoids the cancellation in sq − (K̂v*)ᵀC(K̂v*)
    let err = v_star - c.apply(&kv)?;
    let err_sq = err.dot(&handle.matvec(&err)?);
    Ok((err_sq / sq).max(0.0).sqrt())
}
