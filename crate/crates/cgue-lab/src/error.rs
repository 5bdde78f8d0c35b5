use thiserror::Error;

/// Error type shared by all modules.
///
/// Variants map onto the CLI exit-code contract: invalid input -> 2,
/// capacity guards -> 3, numerical non-convergence / infeasibility -> 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {context}{}", hash_suffix(.matrix_hash))]
    NumericFailure {
        context: String,
        matrix_hash: Option<u64>,
    },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Degeneracy detection found direction-dependent multiplicity
    /// patterns; both observed patterns are carried for inspection.
    #[error("ambiguous degeneracy pattern: {first:?} vs {second:?}")]
    AmbiguousDegeneracy {
        first: Vec<usize>,
        second: Vec<usize>,
    },

    #[error("divergent: {0}")]
    Divergence(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

fn hash_suffix(h: &Option<u64>) -> String {
    match h {
        Some(h) => format!(" (matrix hash {h:#018x})"),
        None => String::new(),
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl Error {
    /// Exit code for the CLI: 0 success, 2 invalid input, 3 capacity
    /// guard, 4 numerical non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Parse(_) | Error::Io(_) => 2,
            Error::Capacity(_) => 3,
            Error::NumericFailure { .. }
            | Error::AmbiguousDegeneracy { .. }
            | Error::Divergence(_)
            | Error::Infeasible(_) => 4,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
