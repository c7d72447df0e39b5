//! A solver session: the kernel matrix handle, the targets, the prior mean
//! and the current solver state, with the posterior available at any step.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{CacheMode, KernelMatrix, KernelParams};
use crate::policies::Policy;
use crate::posterior::{CombinedPosterior, PriorMean};
use crate::solver::{
    continue_run, solver_step, SolverOptions, SolverState, StepRecord, StopReason, StoppingConfig,
};

#[derive(Debug)]
pub struct IterGp {
    handle: KernelMatrix,
    prior_mean: PriorMean,
    targets: DVector<f64>,
    state: SolverState,
    options: SolverOptions,
    trace: Vec<StepRecord>,
}

impl IterGp {
    pub fn new(
        kernel: KernelParams,
        inputs: DMatrix<f64>,
        targets: DVector<f64>,
        noise: f64,
        prior_mean: PriorMean,
    ) -> Result<Self> {
        Self::with_options(kernel, inputs, targets, noise, prior_mean, SolverOptions::default())
    }

    pub fn with_options(
        kernel: KernelParams,
        inputs: DMatrix<f64>,
        targets: DVector<f64>,
        noise: f64,
        prior_mean: PriorMean,
        options: SolverOptions,
    ) -> Result<Self> {
        if targets.len() != inputs.nrows() {
            return Err(Error::dims("targets", inputs.nrows(), targets.len()));
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("targets must be finite".into()));
        }
        let handle = KernelMatrix::new(kernel, inputs, noise)?;
        Ok(Self::from_handle(handle, targets, prior_mean, options))
    }

    fn from_handle(
        handle: KernelMatrix,
        targets: DVector<f64>,
        prior_mean: PriorMean,
        options: SolverOptions,
    ) -> Self {
        let centered = &targets - prior_mean.at_rows(handle.inputs());
        Self {
            state: SolverState::with_action_log(centered, options.log_actions),
            handle,
            prior_mean,
            targets,
            options,
            trace: Vec::new(),
        }
    }

    pub fn handle(&self) -> &KernelMatrix {
        &self.handle
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn prior_mean(&self) -> &PriorMean {
        &self.prior_mean
    }

    pub fn trace(&self) -> &[StepRecord] {
        &self.trace
    }

    pub fn iteration(&self) -> usize {
        self.state.iteration()
    }

    /// One solver step with a caller-chosen action.
    pub fn step(&mut self, action: &DVector<f64>) -> Result<StepRecord> {
        let record = solver_step(&mut self.state, &self.handle, action, &self.options)?;
        self.trace.push(record.clone());
        Ok(record)
    }

    /// Continue until `stopping.max_iterations` total iterations or the
    /// residual tolerance is met.
    pub fn run(&mut self, policy: &mut dyn Policy, stopping: &StoppingConfig) -> Result<StopReason> {
        continue_run(
            &mut self.state,
            &self.handle,
            policy,
            stopping,
            &self.options,
            &mut self.trace,
        )
    }

    pub fn posterior(&self) -> CombinedPosterior {
        CombinedPosterior::new(
            self.prior_mean.clone(),
            *self.handle.kernel(),
            self.handle.inputs().clone(),
            self.handle.noise(),
            self.state.v().clone(),
            self.state.precision(),
        )
        .expect("session invariants give consistent shapes")
    }

    /// Append new observations while keeping every stored direction.
    ///
    /// Directions are zero-padded, so `C` is padded with zeros and the
    /// posterior mean is unchanged until the next step. The residual of the
    /// appended rows and the new rows of each cached `K̂d_j` need
    /// `k(X′, X)`, one n′×n block.
    pub fn extend_online(&self, new_inputs: &DMatrix<f64>, new_targets: &DVector<f64>) -> Result<IterGp> {
        let n = self.handle.n();
        let extra = new_inputs.nrows();
        if new_targets.len() != extra {
            return Err(Error::dims("new targets", extra, new_targets.len()));
        }
        if new_inputs.ncols() != self.handle.dim() {
            return Err(Error::dims("new input dimension", self.handle.dim(), new_inputs.ncols()));
        }
        if new_targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("targets must be finite".into()));
        }
        let kernel = *self.handle.kernel();
        let cross = kernel.cross_block(new_inputs, self.handle.inputs())?;

        let mut inputs = DMatrix::zeros(n + extra, self.handle.dim());
        inputs.rows_mut(0, n).copy_from(self.handle.inputs());
        inputs.rows_mut(n, extra).copy_from(new_inputs);
        let mode = match self.handle.cache_mode() {
            CacheMode::Dense if n + extra > crate::kernels::DENSE_CACHE_LIMIT => CacheMode::auto(n + extra),
            m => m,
        };
        let handle = KernelMatrix::with_cache_mode(kernel, inputs, self.handle.noise(), mode)?;

        let target_tail = new_targets - self.prior_mean.at_rows(new_inputs);
        let residual_tail = &target_tail - &cross * self.state.v();
        let tails: Vec<DVector<f64>> = self
            .state
            .directions()
            .iter()
            .map(|dir| &cross * &dir.d)
            .collect();
        let state = self.state.pad(&target_tail, &residual_tail, &tails);

        let mut targets = DVector::zeros(n + extra);
        targets.rows_mut(0, n).copy_from(&self.targets);
        targets.rows_mut(n, extra).copy_from(new_targets);
        Ok(IterGp {
            handle,
            prior_mean: self.prior_mean.clone(),
            targets,
            state,
            options: self.options,
            trace: self.trace.clone(),
        })
    }
}
