use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid frame parameters: {0}")]
    InvalidParams(String),
    #[error("{context}: expected {expected} entries, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("cannot place {requested} distinct targets on a grid of {cells} cells")]
    TooManyTargets { requested: usize, cells: usize },
    #[error("target set: {0}")]
    InvalidTargets(String),
    #[error("signal power is zero, SNR is undefined")]
    ZeroSignalPower,
    #[error("dataset: bad magic")]
    BadMagic,
    #[error("dataset: unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("dataset: payload truncated (expected {expected} bytes, found {found})")]
    Truncated { expected: u64, found: u64 },
    #[error("dataset: {0}")]
    InvalidDataset(String),
    #[error("training data: {0}")]
    InvalidTrainingData(String),
    #[error("{0}")]
    Nn(#[from] otfs_nn::NnError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
