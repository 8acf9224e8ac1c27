use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("arithmetic mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("arithmetic mode {mode} cannot represent {what}")]
    Unrepresentable { mode: String, what: String },

    #[error("resource budget exceeded: {0}")]
    ResourceBudget(String),

    #[error("count table too short: need n = {needed}, table covers n <= {have}")]
    TableTooShort { needed: usize, have: usize },

    #[error("series diverges: {0}")]
    Divergent(String),

    #[error("target error {target} unreachable: best bound {achieved} at cutoff {cutoff}")]
    TargetUnreachable {
        target: String,
        achieved: String,
        cutoff: usize,
    },

    #[error("precision starvation: {0}")]
    PrecisionStarvation(String),

    #[error("root not bracketed on [{lo}, {hi}]")]
    NotBracketed { lo: String, hi: String },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("numerical breakdown: {0}")]
    Numerical(String),

    #[error("limit-law derivation mismatch: {0}")]
    DerivationMismatch(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed data: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
