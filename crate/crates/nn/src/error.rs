use thiserror::Error;

pub type Result<T, E = NnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{context}: incompatible shapes {expected:?} and {actual:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("tensor data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{0}: backward called without a preceding forward pass")]
    NoForwardCache(&'static str),
    #[error("invalid layer configuration: {0}")]
    InvalidConfig(String),
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown layer kind tag {0}")]
    UnknownLayer(u8),
    #[error("checkpoint truncated")]
    Truncated,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
