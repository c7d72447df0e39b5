//! Computation-aware Gaussian process regression.
//!
//! The central object is a probabilistic linear solver that iteratively
//! learns the representer weights `v* = K̂⁻¹(y − μ)` from one-dimensional
//! projections of the residual. After `i` steps it holds an estimate `v_i`
//! together with a rank-`i` approximation `C_i ≈ K̂⁻¹`, from which the
//! combined posterior
//!
//! ```text
//! μ_i(x)    = μ(x) + k(x, X) v_i
//! k_i(x, x') = k(x, x') − k(x, X) C_i k(X, x')
//! ```
//!
//! is evaluated. The combined covariance accounts for both the usual
//! posterior uncertainty and the error introduced by stopping the solver
//! early. The choice of actions ([`policies`]) selects which classical
//! approximation is recovered: partial Cholesky, (preconditioned) CG,
//! truncated eigendecomposition, or inducing-point projections.

pub mod artifact;
pub mod benchmark;
pub mod config;
pub mod data;
pub mod error;
pub mod kernels;
pub mod metrics;
pub mod model;
pub mod policies;
pub mod posterior;
pub mod solver;

pub use error::{Error, Result};
pub use kernels::{CacheMode, KernelFamily, KernelMatrix, KernelParams};
pub use model::IterGp;
pub use policies::{Policy, PolicyKind, PreconditionerSpec};
pub use posterior::{CombinedPosterior, PriorMean, UncertaintyBreakdown};
pub use solver::{LowRankPrecision, SolverOptions, SolverState, StepRecord, StoppingConfig};
