use thiserror::Error;

/// Broad failure category, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum GaspError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("covariance matrix is singular after jitter levels {jitters:?}")]
    SingularCovariance { jitters: Vec<f64> },

    #[error("rank deficiency: {0}")]
    Rank(String),

    #[error("degenerate output: {0}")]
    DegenerateOutput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("sampler failed: {0}")]
    Chain(String),
}

impl GaspError {
    pub fn class(&self) -> ErrorClass {
        match self {
            GaspError::Config(_) | GaspError::Domain(_) => ErrorClass::Config,
            GaspError::DimensionMismatch { .. }
            | GaspError::Data(_)
            | GaspError::DegenerateOutput(_)
            | GaspError::Rank(_) => ErrorClass::Data,
            GaspError::SingularCovariance { .. }
            | GaspError::Numerical(_)
            | GaspError::Fit(_)
            | GaspError::Chain(_) => ErrorClass::Numerical,
        }
    }

    /// Short machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            GaspError::Domain(_) => "E_DOMAIN",
            GaspError::DimensionMismatch { .. } => "E_DIM",
            GaspError::SingularCovariance { .. } => "E_SINGULAR",
            GaspError::Rank(_) => "E_RANK",
            GaspError::DegenerateOutput(_) => "E_DEGENERATE",
            GaspError::Config(_) => "E_CONFIG",
            GaspError::Data(_) => "E_DATA",
            GaspError::Numerical(_) => "E_NUMERIC",
            GaspError::Fit(_) => "E_FIT",
            GaspError::Chain(_) => "E_CHAIN",
        }
    }
}

pub type Result<T> = std::result::Result<T, GaspError>;
