use std::path::PathBuf;

use crate::mcmc::ChainDraws;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("empty support: n = {n} exceeds group total {total}")]
    EmptySupport { n: u64, total: u64 },

    #[error("oracle too large: {size} compositions exceeds cap {cap}")]
    OracleTooLarge { size: u128, cap: u128 },

    #[error("chain initialization failed: {0}")]
    Initialization(String),

    #[error(
        "gibbs-abc stalled at sweep {sweep}, group {group}: {attempts} attempts without acceptance"
    )]
    AttemptsExceeded {
        sweep: usize,
        group: usize,
        attempts: u64,
        partial: Box<ChainDraws>,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad caller input rather than a failed run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::EmptySupport { .. }
                | Error::OracleTooLarge { .. }
                | Error::Data(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }

    /// Short machine-readable tag used in single-line JSON error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::EmptySupport { .. } => "empty_support",
            Error::OracleTooLarge { .. } => "oracle_too_large",
            Error::Initialization(_) => "initialization",
            Error::AttemptsExceeded { .. } => "attempts_exceeded",
            Error::Data(_) => "data",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
