use thiserror::Error;

/// Errors raised across the estimator toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is empty ({rows}x{cols})")]
    EmptyMatrix { rows: usize, cols: usize },

    #[error("matrix has {expected} entries expected, got {got}")]
    EntryCount { expected: usize, got: usize },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: String,
        got: String,
    },

    #[error("column rank deficient: rank {rank} < {cols} columns")]
    ColumnRankDeficient { rank: usize, cols: usize },

    #[error("matrix is not Hurwitz (spectral abscissa {abscissa:.3e})")]
    NotHurwitz { abscissa: f64 },

    #[error("linear solve failed: {0}")]
    Singular(String),

    #[error("nonlinearity returned a non-finite value at t = {t}")]
    NonFiniteNonlinearity { t: f64 },

    #[error("LMI program infeasible: {0}")]
    Infeasible(String),

    #[error("numerical failure in solver: {0}")]
    NumericalFailure(String),

    #[error("P is not positive definite (min eigenvalue {min_eig:.3e})")]
    PNotPositiveDefinite { min_eig: f64 },

    #[error("observer identity {name} violated: residual {residual:.3e}")]
    IdentityViolation { name: &'static str, residual: f64 },

    #[error("mass matrix is singular")]
    SingularMassMatrix,

    #[error("state diverged (non-finite) at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(context: &str, expected: impl ToString, got: impl ToString) -> Error {
    Error::Dimension {
        context: context.to_string(),
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
