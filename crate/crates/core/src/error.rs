use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    /// Structural problem in an ODST container, located by byte offset.
    #[error("malformed container at byte {offset}: {reason}")]
    Container { offset: u64, reason: String },

    #[error("checksum mismatch in record {record}")]
    Checksum { record: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate stick kernel: spacing {spacing} at {angle}° rounds to a zero displacement")]
    DegenerateKernel { spacing: u32, angle: f64 },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
