use thiserror::Error;

#[derive(Debug, Error)]
pub enum DapError {
    #[error("no documents")]
    NoDocuments,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("gamma diverged")]
    GammaDiverged,
    #[error("vhat bracket failure")]
    VhatBracket,
    #[error("regularizer too strong (condition number {condition:.3e})")]
    RegularizerTooStrong { condition: f64 },
    #[error("tau must lie in the simplex interior (component {0} is zero)")]
    TauBoundary(usize),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("empty test set")]
    EmptyTestSet,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DapError>;

impl DapError {
    /// True for failures caused by numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            DapError::GammaDiverged
                | DapError::VhatBracket
                | DapError::RegularizerTooStrong { .. }
                | DapError::NonFinite(_)
        )
    }
}
