use thiserror::Error;

/// Errors raised by problem construction, decision rules and verification.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GnpError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown loss id `{0}`")]
    UnknownLoss(String),

    #[error("malformed problem: {0}")]
    Structural(String),

    #[error("no feasible action in loss `{loss}`: least loss exceeds bound {bound}")]
    NoFeasibleAction { loss: String, bound: String },

    #[error("likelihood ratio undefined at outcome {at}: null density is zero where the alternative is positive")]
    UndefinedRatio { at: f64 },

    #[error("enumeration of {count} candidates exceeds the limit of {limit}")]
    EnumerationTooLarge { count: u128, limit: u128 },

    #[error("problem file: {0}")]
    ProblemFile(String),
}

pub type Result<T> = std::result::Result<T, GnpError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> GnpError {
    GnpError::InvalidParameter { name, reason: reason.into() }
}

pub(crate) fn check_level(name: &'static str, alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("{alpha} is not in (0, 1)")))
    }
}
