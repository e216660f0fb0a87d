use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("amplitudes are not normalized: |α|²+|β|² = {norm}")]
    Normalization { norm: f64 },

    #[error("matrix is not a valid density operator: {reason}")]
    Domain { reason: String },

    #[error("channel is not trace preserving: Tr χ = {trace}")]
    NotTracePreserving { trace: f64 },

    #[error("conditional state undefined: outcome probability {probability:e}")]
    UndefinedConditional { probability: f64 },

    #[error("heralding efficiency undefined: both flag and dark probabilities are zero")]
    UndefinedHeralding,

    #[error("fidelity undefined: no coincidences in the selected pattern")]
    UndefinedFidelity,

    #[error("threshold {threshold} is never crossed (searched up to {searched_db} dB)")]
    UnreachableThreshold { threshold: f64, searched_db: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("insufficient data for reconstruction: {reason}")]
    RankDeficient { reason: String },

    #[error(
        "reconstruction did not converge after {iterations} iterations \
         (log-likelihood {log_likelihood}, last relative improvement {last_improvement:e})"
    )]
    NotConverged {
        iterations: usize,
        log_likelihood: f64,
        last_improvement: f64,
    },

    #[error("bootstrap failed: {failed} of {total} resamples could not be reconstructed")]
    Bootstrap { failed: usize, total: usize },

    #[error("malformed tomography table at line {line}: {reason}")]
    Table { line: usize, reason: String },
}

impl Error {
    pub(crate) fn domain(reason: impl Into<String>) -> Self {
        Error::Domain {
            reason: reason.into(),
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of the estimation stage (reconstruction, bootstrap).
    pub fn is_estimation(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. } | Error::NotConverged { .. } | Error::Bootstrap { .. }
        )
    }
}
