use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: expected {expected}, found {found}")]
    InputSize {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("rank-deficient system: estimated rank {rank} of {cols} columns")]
    Singular { rank: usize, cols: usize },

    #[error("spectral null in channel estimate at bin {bin} (|H| = {magnitude:e})")]
    SpectralNull { bin: usize, magnitude: f64 },

    #[error("output: {0}")]
    Output(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn size(what: &'static str, expected: usize, found: usize) -> Self {
        Error::InputSize {
            what,
            expected,
            found,
        }
    }
}
