//! Dense reference implementations used as ground truth.
//!
//! Everything here is O(n³) and written from the textbook algorithms,
//! sharing only kernel evaluation with the `itergp` library.

mod cg;
mod cholesky;
mod exact;
mod linalg;
mod nystrom;
mod rkhs;

pub use cg::{cg_envelope, classical_pcg, classical_pcg_reorthogonalized, deflated_cg, deflated_cg_reorthogonalized, PcgTrace};
pub use cholesky::{classical_partial_cholesky, PartialCholesky, PivotOrder};
pub use exact::ExactGp;
pub use linalg::{condition_number, sorted_eigen};
pub use nystrom::{nystrom_sor_mean, pseudo_input_mean, SorMean};
pub use rkhs::{noisy_gram, rkhs_norm};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("non-positive pivot {value:e} at step {step}")]
    NonPositivePivot { step: usize, value: f64 },
    #[error("zero curvature at iteration {0}")]
    ZeroCurvature(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Kernel(#[from] itergp::Error),
}

pub type Result<T> = std::result::Result<T, OracleError>;
