use thiserror::Error;

/// Errors produced anywhere in the reduced-order modeling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not symmetric positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("singular matrix: {0}")]
    Singular(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("truncation tolerance {tol:e} removes every singular value (largest is {largest:e})")]
    ToleranceTooLarge { tol: f64, largest: f64 },

    #[error("requested rank {requested} exceeds numerical rank {available}")]
    RankDeficient { requested: usize, available: usize },

    #[error("integration diverged at step {step} (t = {time})")]
    BlowUp { step: usize, time: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for failures caused by bad configuration or input files rather than numerics.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::InvalidArgument(_) | Error::Parse { .. } | Error::Io { .. } | Error::Dimension { .. } => true,
            Error::Stage { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}
