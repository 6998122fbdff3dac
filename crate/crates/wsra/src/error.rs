use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum WsraError {
    #[error("shape mismatch in {op}: {details}")]
    Shape { op: String, details: String },

    #[error("degenerate vector: zero norm in {op}")]
    DegenerateVector { op: String },

    #[error("gradient missing for parameter {name}")]
    MissingGrad { name: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("grounding error: {0}")]
    Grounding(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("training error: {0}")]
    Train(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, WsraError>;
