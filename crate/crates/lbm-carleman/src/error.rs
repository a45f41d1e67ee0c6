use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0}, expected 1, 2 or 3")]
    UnsupportedDimension(usize),

    #[error("relaxation time {0} is not above 1/2")]
    UnstableRelaxation(f64),

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("capacity exceeded for {what}: needs {needed} bytes, cap is {cap} bytes")]
    Capacity { what: String, needed: u128, cap: u128 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value encountered at step {step}")]
    NonFinite { step: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit status used by the experiment runner: 3 for capacity,
    /// 4 for numerical failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Capacity { .. } => 3,
            Error::NonFinite { .. } | Error::Numerical(_) | Error::UnstableRelaxation(_) => 4,
            _ => 2,
        }
    }

    /// Prefixes a capacity error with the sweep point that raised it.
    pub fn at_point(self, re: f64, nc: usize) -> Self {
        match self {
            Error::Capacity { what, needed, cap } => Error::Capacity { what: format!("Re={re}, N_C={nc}: {what}"), needed, cap },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { context, expected, got })
    }
}
