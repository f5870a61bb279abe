use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the simulation, analysis and extraction chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("FWHM undefined: {0}")]
    FwhmUndefined(String),

    #[error("autocorrelation never reaches zero within {max_lag} lags; raise max_lag")]
    NoDecorrelation { max_lag: usize },

    #[error(
        "calibration infeasible: target FWHM ratio {target:.4} exceeds the maximum achievable ratio {max_ratio:.4}"
    )]
    CalibrationInfeasible { target: f64, max_ratio: f64 },

    #[error("zero min-entropy: refusing to extract bits from a source with no entropy")]
    ZeroEntropy,

    #[error("insufficient data: {what} needs at least {needed}, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors caused by the data or configuration rather than the environment.
    pub fn is_data_error(&self) -> bool {
        !matches!(self.root(), Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
