use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    /// The action is (numerically) contained in the span of the actions
    /// already explored. The state is left untouched; callers discard the
    /// action and continue.
    #[error("degenerate action: eta = {eta:e} <= {threshold:e}")]
    DegenerateAction { eta: f64, threshold: f64 },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(what: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            what,
            expected,
            actual,
        }
    }
}
