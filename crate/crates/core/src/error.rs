use thiserror::Error;

/// Errors raised by the library. Each variant maps onto one CLI exit code
/// through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("eigensolver did not converge")]
    NoConvergence,

    #[error("k = {k} splits a complex-conjugate eigenvalue pair; try k in {suggestions:?}")]
    ConjugatePairSplit { k: usize, suggestions: Vec<usize> },

    #[error("coarse-graining map is rank deficient (rank {rank} < k = {k})")]
    RankDeficient { rank: usize, k: usize },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("matrix is not positive semidefinite: {0}")]
    NotPositiveSemidefinite(String),

    #[error("matrix is not row-stochastic: {0}")]
    NotStochastic(String),

    #[error("singular dynamics: {0}")]
    Singular(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit status used by the command-line front end.
    ///
    /// 2 parse, 3 math domain, 4 structural (pair split, infeasible k), 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) => 2,
            Error::ConjugatePairSplit { .. } | Error::DimensionMismatch(_) | Error::RankDeficient { .. } => 4,
            Error::Io(_) => 5,
            _ => 3,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(std::io::Error::other(e.to_string()))
        } else {
            Error::Parse(e.to_string())
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                other => Error::Parse(format!("{other:?}")),
            }
        } else {
            Error::Parse(e.to_string())
        }
    }
}
