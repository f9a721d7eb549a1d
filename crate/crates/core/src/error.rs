use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("impossible observation: {0}")]
    ImpossibleObservation(String),

    #[error("invalid channel: {}", .0.join("; "))]
    InvalidChannel(Vec<String>),

    #[error("numeric failure in {layer}")]
    NumericFailure { layer: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("q-graph determinism violation: {0}")]
    Determinism(String),

    #[error("q-graph coverage error, unobserved (node, output) pairs: {0:?}")]
    Coverage(Vec<(usize, usize)>),

    #[error("corrupt symbol stream: {0}")]
    Corruption(String),

    #[error("objective is not unimodal: {0}")]
    NotUnimodal(String),

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
