use thiserror::Error;

/// Errors produced by the synthesis and simulation pipeline.
#[derive(Error, Debug)]
pub enum Error {
    /// An operand had incompatible dimensions. Carries the operation name
    /// and the offending operand so the caller can see what went wrong.
    #[error("dimension mismatch in {op}: {operand} is {got}, expected {expected}")]
    Dimension {
        op: &'static str,
        operand: &'static str,
        expected: String,
        got: String,
    },

    #[error("matrix {name} is numerically singular (condition estimate {cond:.3e} > {limit:.1e})")]
    Singular {
        name: &'static str,
        cond: f64,
        limit: f64,
    },

    #[error("matrix {name} is not positive definite (lambda_min = {min_eig:.3e})")]
    NotPositiveDefinite { name: &'static str, min_eig: f64 },

    #[error("{name} is rank deficient: rank {rank} < {required}")]
    RankDeficient {
        name: &'static str,
        rank: usize,
        required: usize,
    },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("solver failed: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("malformed data file {path}: {reason}")]
    Parse { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn dimension(
        op: &'static str,
        operand: &'static str,
        expected: impl Into<String>,
        got: impl Into<String>,
    ) -> Self {
        Error::Dimension {
            op,
            operand,
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
