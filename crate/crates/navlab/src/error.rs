//! Error type shared across the crate.

pub type Result<T> = std::result::Result<T, NavError>;

#[derive(Debug, thiserror::Error)]
pub enum NavError {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error("no scale for zero distance")]
    ZeroDistanceScale,

    #[error("scale index {k} out of range 1..={max}")]
    ScaleOutOfRange { k: usize, max: usize },

    #[error("substrate axiom violated for pair ({s}, {t})")]
    SubstrateAxiom { s: u32, t: u32 },

    #[error("set system axiom failure: {0}")]
    AxiomFailure(String),

    #[error("size overflow: {0}")]
    SizeOverflow(String),

    #[error("instance too large for exact oracle: {0}")]
    OracleScale(String),

    #[error("degenerate budget: {0}")]
    DegenerateBudget(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
