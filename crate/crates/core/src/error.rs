use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the engine can report.
///
/// The CLI maps each variant onto its own exit code, so new variants need a
/// matching arm in [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("config: line {line}: key `{key}`: {message}")]
    Config {
        key: String,
        line: usize,
        message: String,
    },

    #[error("invalid setting: {0}")]
    InvalidSetting(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite gradient in parameter block `{block}` at index {index}")]
    NonFiniteGradient { block: String, index: usize },

    #[error("protocol: {0}")]
    Protocol(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("incompatible datasets: {0}")]
    Incompatible(String),

    #[error("mismatched runs: {0}")]
    MismatchedRuns(String),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used in CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::InvalidSetting(_) => "invalid-setting",
            Error::Dimension(_) => "dimension",
            Error::NonFiniteGradient { .. } => "non-finite",
            Error::Protocol(_) => "protocol",
            Error::EmptyDataset => "empty-dataset",
            Error::Incompatible(_) => "incompatible",
            Error::MismatchedRuns(_) => "mismatched-runs",
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidSetting(_) => 3,
            Error::Io { .. } => 4,
            Error::Dimension(_) => 5,
            Error::Format(_) | Error::Csv(_) => 6,
            Error::Incompatible(_) | Error::MismatchedRuns(_) | Error::EmptyDataset => 7,
            Error::NonFiniteGradient { .. } | Error::Protocol(_) => 8,
        }
    }
}

/// Failures decoding the binary dataset and checkpoint containers.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },

    #[error("file truncated: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("malformed contents: {0}")]
    Malformed(String),
}
