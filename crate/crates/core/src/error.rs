use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: not a number: {content:?}")]
    Parse { line: usize, content: String },

    #[error("input contains no measurements")]
    EmptyInput,

    #[error("value at position {index} is not finite")]
    NonFinite { index: usize },

    #[error("series lengths differ ({x} vs {y}); pass truncate to cut to the common prefix")]
    LengthMismatch { x: usize, y: usize },

    #[error("series units differ ({x} vs {y})")]
    UnitMismatch { x: String, y: String },

    #[error("quantile level {0} is outside (0, 1)")]
    InvalidLevel(f64),

    #[error("invalid quantile levels: {0}")]
    InvalidLevels(String),

    #[error("block length {m} is invalid for a series of length {n}")]
    InvalidBlockLength { m: usize, n: usize },

    #[error("at least {min} bootstrap replicates are required, got {got}")]
    TooFewReplicates { got: usize, min: usize },

    #[error("no quantile level is active")]
    EmptyActiveSet,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid power request: {0}")]
    InvalidRequest(String),

    #[error("pilot sample has {n} paired values, at least {min} are required")]
    PilotTooSmall { n: usize, min: usize },

    #[error("pilot sample is degenerate: {0}")]
    DegeneratePilot(String),

    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),
}

impl Error {
    /// Whether the error stems from the measurement data rather than from
    /// the caller's parameters.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::EmptyInput
                | Error::NonFinite { .. }
                | Error::LengthMismatch { .. }
                | Error::UnitMismatch { .. }
                | Error::PilotTooSmall { .. }
                | Error::DegeneratePilot(_)
        )
    }
}
