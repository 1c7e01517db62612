use std::io;

use thiserror::Error;

/// Errors raised by the decoding engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Byte-level or dimensional problem in a wire format.
    #[error("format error: {0}")]
    Format(String),

    /// A configuration or input failed validation.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Tensor or matrix dimensions do not match.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The loss or an activation became NaN or infinite.
    #[error("non-finite value in layer `{layer}`")]
    NonFinite { layer: &'static str },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
