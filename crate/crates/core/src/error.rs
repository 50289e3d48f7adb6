use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // Configuration and validation.
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("unrecognized unit tag in key `{0}`")]
    UnitTag(String),
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("conflicting keys: {0}")]
    Conflict(String),
    #[error("non-physical value for `{field}`: {reason}")]
    NonPhysical { field: String, reason: String },
    #[error("malformed configuration: {0}")]
    Parse(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),

    // Numerical failures.
    #[error("integrator could not reach tolerance (step {step:.3e} at t = {t:.6})")]
    ToleranceUnreachable { t: f64, step: f64 },
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("no sign change in bracket [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("fit window invalid: {0}")]
    FitWindow(String),
    #[error("trace drift {drift:.3e} exceeds bound at t = {t}")]
    TraceDrift { t: f64, drift: f64 },
    #[error("truncation too small: {0}")]
    Truncation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Input and configuration problems, as opposed to failures of a
    /// numerical method on valid input.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::MissingField(_)
                | Error::UnitTag(_)
                | Error::UnknownKey(_)
                | Error::Conflict(_)
                | Error::NonPhysical { .. }
                | Error::Parse(_)
                | Error::UnknownPreset(_)
                | Error::InvalidInput(_)
        )
    }

    pub(crate) fn non_physical(field: &str, reason: impl Into<String>) -> Self {
        Error::NonPhysical {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
