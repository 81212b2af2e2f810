//! Crate-wide error type.

/// Errors surfaced by any embedlab module.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation (zero-norm
    /// vector, non-positive temperature, empty batch, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller broke an API contract (non-scalar loss node, wrong batch
    /// kind for a stage, mismatched ids, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid configuration (bad dimensions, missing checkpoint, unknown
    /// ablation name, ...).
    #[error("config error: {0}")]
    Config(String),

    /// Operand shapes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A NaN or infinity was produced or observed.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A batch is degenerate for the requested loss (e.g. all embeddings
    /// identical for relational distillation).
    #[error("degenerate batch: {0}")]
    Degenerate(String),

    /// A file did not match its expected binary or text format.
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
