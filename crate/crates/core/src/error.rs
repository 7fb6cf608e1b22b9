use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("label {label} is not compatible with loss `{loss}`")]
    IncompatibleLabel { label: String, loss: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numeric domain error: {0}")]
    Domain(String),

    #[error("loss `{0}` is not differentiable")]
    NotDifferentiable(String),

    #[error("loss `{0}` has no finite self-bounding Lipschitz parameters")]
    NotSelfBounding(String),

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("ensemble budget violated: sum of alphas {sum} exceeds beta {beta}")]
    Budget { sum: f64, beta: f64 },

    #[error("enumeration guard exceeded: {0} evaluations per draw")]
    GuardExceeded(f64),

    /// An error tied to a line of an input file.
    #[error("line {line}: {source}")]
    AtLine { line: usize, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse classification used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::AtLine { source, .. } => source.class(),
            Error::InvalidParameter(_) | Error::NotDifferentiable(_) | Error::NotSelfBounding(_) => {
                ErrorClass::Usage
            }
            Error::Domain(_) | Error::Budget { .. } | Error::GuardExceeded(_) => ErrorClass::Numeric,
            Error::DimensionMismatch { .. }
            | Error::IncompatibleLabel { .. }
            | Error::EmptyData(_)
            | Error::Parse { .. }
            | Error::Data(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => ErrorClass::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
