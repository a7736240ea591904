use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("PDB line {line}: {message}")]
    PdbParse { line: usize, message: String },
    #[error("no atoms parsed")]
    NoAtoms,
    #[error("chain {0} not found in structure")]
    MissingChain(String),
    #[error("no contact residues within cutoff")]
    NoContacts,
    #[error("empty graph: {0}")]
    EmptyGraph(&'static str),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown entry id {0}")]
    UnknownId(String),
    #[error("bad magic bytes in {0}")]
    BadMagic(&'static str),
    #[error("unsupported {kind} format version {found} (expected {expected})")]
    VersionMismatch {
        kind: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("truncated {0} file")]
    Truncated(&'static str),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("checkpoint is missing tensor {0}")]
    MissingTensor(String),
    #[error("non-finite loss in component {component} at step {step}")]
    NonFiniteLoss { component: String, step: usize },
    #[error("invalid residue symbol {0:?}")]
    InvalidSymbol(char),
    #[error("config error: {0}")]
    Config(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("scorer {name} failed: {message}")]
    Scorer { name: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
