use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid kind: expected {expected}, found {found}")]
    InvalidKind {
        expected: &'static str,
        found: &'static str,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("empty geometry: {0}")]
    EmptyGeometry(String),

    #[error("spec error: {0}")]
    Spec(String),

    #[error("capability error: {0}")]
    Capability(String),

    #[error("mesh parse error in {path}: line {line}: {message}")]
    MeshParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("training diverged at step {step} (epoch {epoch}): L_d={l_d}, L_g={l_g}, batch={batch:?}")]
    NonFinite {
        step: u64,
        epoch: u64,
        l_d: f64,
        l_g: f64,
        batch: Vec<usize>,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
