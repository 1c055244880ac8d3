use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("matrix exponential did not converge (norm {0:e})")]
    ExpmNonConvergence(f64),

    #[error("Riccati iteration did not converge after {0} iterations")]
    RiccatiNonConvergence(usize),

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("delay {delay} outside bounds [{lo}, {hi}]")]
    DelayOutOfBounds { delay: usize, lo: usize, hi: usize },

    #[error("steps must increase by one: expected {expected}, got {got}")]
    NonMonotoneStep { expected: i64, got: i64 },

    #[error("replayed delay trace exhausted at step {0}")]
    TraceExhausted(i64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
