use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("calibration failed: residual {residual:.4} exceeds {tolerance}")]
    Calibration { residual: f64, tolerance: f64 },

    #[error(transparent)]
    Core(#[from] precert_core::Error),
}

impl HarnessError {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        HarnessError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Process exit status: 2 parse, 3 validation, 4 estimation,
    /// 5 unreachable threshold, 1 anything else.
    pub fn exit_code(&self) -> u8 {
        use precert_core::Error as E;
        match self {
            HarnessError::Parse { .. } | HarnessError::Read { .. } => 2,
            HarnessError::Validation { .. } => 3,
            HarnessError::Calibration { .. } => 4,
            HarnessError::Write { .. } => 1,
            HarnessError::Core(e) => match e {
                E::UnreachableThreshold { .. } => 5,
                E::Table { .. } => 2,
                e if e.is_estimation() => 4,
                E::UndefinedConditional { .. } | E::UndefinedHeralding | E::UndefinedFidelity => 4,
                _ => 3,
            },
        }
    }
}
