use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the library.
///
/// [`Error::class`] groups them into the coarse failure classes the command
/// line reports through its exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("architecture error at layer {layer}: {message}")]
    Architecture { layer: String, message: String },
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("unknown {kind} `{name}`")]
    Lookup { kind: &'static str, name: String },
    #[error("label error: {0}")]
    Label(String),
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("checkpoint checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("catalog digest mismatch: checkpoint was written for a different catalog")]
    CatalogDigest,
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse failure class of an [`Error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed or inconsistent input files and labels.
    Format,
    /// Non-finite values or failed numerical checks.
    Numerical,
    /// Everything else (contracts, architecture, I/O).
    Other,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Label(_)
            | Error::Format { .. }
            | Error::Shape(_)
            | Error::Checksum { .. }
            | Error::Version { .. }
            | Error::CatalogDigest
            | Error::Checkpoint(_) => ErrorClass::Format,
            Error::Numerical(_) | Error::Domain(_) => ErrorClass::Numerical,
            _ => ErrorClass::Other,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: message.into(),
        }
    }
}
