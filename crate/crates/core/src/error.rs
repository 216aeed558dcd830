use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = JamError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum JamError {
    /// A scalar argument fell outside the domain of the function it was passed to.
    #[error("{what} = {value} is outside the valid domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("{what} is not finite at index {index} (value {value})")]
    NonFinite {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {reason}")]
    Divergence {
        epoch: usize,
        batch: usize,
        reason: String,
    },

    #[error("malformed {kind} file: field `{field}`: {message}")]
    Format {
        kind: &'static str,
        field: String,
        message: String,
    },

    #[error("unsupported {kind} format_version {found} (this build reads {supported})")]
    UnsupportedVersion {
        kind: &'static str,
        found: i64,
        supported: u32,
    },

    #[error("csv row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("target TPR {target:.4} is unreachable; the sweep covers [{min:.4}, {max:.4}]")]
    UnreachableTpr { target: f64, min: f64, max: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl JamError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        JamError::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error stems from bad user input rather than a runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            JamError::Domain { .. } | JamError::InvalidConfig(_) | JamError::Shape(_)
        )
    }
}

pub(crate) fn ensure_finite(what: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(JamError::NonFinite {
            what,
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}
