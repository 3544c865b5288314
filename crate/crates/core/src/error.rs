use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
    Protocol,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("label {label} at index {index} is out of range for {classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("partition infeasible: {0}")]
    Partition(String),

    #[error(transparent)]
    Idx(#[from] IdxError),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("client {client}: {source}")]
    Client {
        client: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::ConfigParse { .. } => ErrorKind::Config,
            Error::Idx(_)
            | Error::EmptyDataset(_)
            | Error::Partition(_)
            | Error::LabelOutOfRange { .. } => ErrorKind::Data,
            Error::Shape { .. }
            | Error::NonFinite { .. }
            | Error::NonFiniteLoss { .. }
            | Error::InvalidArgument(_) => ErrorKind::Numeric,
            Error::Protocol(_) => ErrorKind::Protocol,
            Error::Client { source, .. } => source.kind(),
            Error::Checkpoint(_) | Error::Io { .. } => ErrorKind::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// IDX ingestion failures; every variant carries the byte offset where reading stopped.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("bad magic 0x{found:08x} (expected 0x{expected:08x}) at byte offset {offset}")]
    BadMagic {
        expected: u32,
        found: u32,
        offset: usize,
    },
    #[error("truncated file: expected {expected} bytes, found {actual} (offset {offset})")]
    Truncated {
        expected: usize,
        actual: usize,
        offset: usize,
    },
    #[error("item count mismatch: {images} images vs {labels} labels (offset {offset})")]
    CountMismatch {
        images: usize,
        labels: usize,
        offset: usize,
    },
}
