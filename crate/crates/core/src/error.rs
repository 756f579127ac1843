use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::InvalidInput(_) => 2,
            Error::Precondition(_) | Error::Infeasible(_) | Error::Domain(_) => 3,
            Error::Internal(_) | Error::Io(_) => 1,
        }
    }
}

/// Returns `alpha * k` as an integer when it is integral (up to rounding noise).
pub(crate) fn integral_count(alpha: f64, k: usize) -> Option<usize> {
    let raw = alpha * k as f64;
    let rounded = raw.round();
    if rounded >= 0.0 && (raw - rounded).abs() <= 1e-9 * (1.0 + raw.abs()) {
        Some(rounded as usize)
    } else {
        None
    }
}
