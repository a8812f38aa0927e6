use thiserror::Error;

/// Errors raised by estimators, density evaluation and geometry recovery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("singular normal matrix (condition number estimate {condition:e})")]
    Singular { condition: f64 },
    #[error("rank-deficient design: rank {rank} of {cols} columns")]
    RankDeficient { rank: usize, cols: usize },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("geometry error: {0}")]
    Geometry(String),
}

impl Error {
    /// True for errors caused by bad caller input rather than a failed computation.
    pub fn is_input(&self) -> bool {
        matches!(
            self,
            Error::Input(_) | Error::Dimension { .. } | Error::Domain(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
