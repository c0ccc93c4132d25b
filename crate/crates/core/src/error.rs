use thiserror::Error;

/// Errors raised by the solver and its building blocks.
#[derive(Debug, Error)]
pub enum Error {
    /// A vector or operator had the wrong length for the requested operation.
    #[error("shape mismatch in {context}: expected length {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A point lies outside the domain of the function being evaluated.
    #[error("domain error: {0}")]
    Domain(String),

    /// A scalar parameter (step size, radius, batch size, ...) is out of range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A gradient oracle produced a non-finite value.
    #[error("non-finite gradient at iteration {iteration}{}", .index.map(|i| format!(" (summand {i})")).unwrap_or_default())]
    Oracle {
        iteration: u64,
        index: Option<usize>,
    },

    /// Problem data violate a construction requirement.
    #[error("invalid problem data: {0}")]
    Construction(String),

    /// Invalid experiment configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Shape {
            context,
            expected,
            actual,
        }
    }

    /// Short machine-readable tag, used by the CLI's error document.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Domain(_) => "domain",
            Error::Parameter(_) => "parameter",
            Error::Oracle { .. } => "oracle",
            Error::Construction(_) => "construction",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
