//! Error taxonomy shared by every subsystem.
//!
//! The categories map one-to-one onto CLI exit codes: config errors are
//! user-fixable before any work starts, format errors mean a file or stream
//! is malformed, and the remaining categories surface runtime failures.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or signal shapes that cannot be combined.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Invalid configuration value(s), reported before any work starts.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed file or byte stream (WAV, checkpoint, bitstream).
    #[error("format error: {0}")]
    Format(String),

    /// Watermark message inconsistent with the model (digit range, base, length).
    #[error("message error: {0}")]
    Message(String),

    /// Metric preconditions violated (zero-power reference, mismatched payloads).
    #[error("metric error: {0}")]
    Metric(String),

    /// Training diverged or produced non-finite values.
    #[error("training error: {0}")]
    Train(String),

    /// I/O failure with the offending path attached.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable process exit code for the CLI: 2 config, 3 format, 4 model/metric, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Format(_) => 3,
            Error::Dimension(_) | Error::Message(_) | Error::Metric(_) | Error::Train(_) => 4,
            Error::Io { .. } => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
