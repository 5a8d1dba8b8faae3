use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("arity error: expected 1, 2, 4 or 8 parts, got {got}")]
    Arity { got: usize },
    #[error("degenerate statistics: {0}")]
    DegenerateStatistics(String),
    #[error("numerical domain error: {0}")]
    NumericalDomain(String),
    #[error("running statistics are uninitialized; run at least one training step first")]
    UninitializedStatistics,
    #[error("config error: {0}")]
    Config(String),
    #[error("training diverged at step {step}: loss = {loss} ({detail})")]
    Divergence { step: usize, loss: f64, detail: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),
    #[error("checksum mismatch: checkpoint payload is corrupted")]
    Checksum,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
