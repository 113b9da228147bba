use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("xml error at line {line}: {message}")]
    Xml { line: u32, message: String },

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("no senses for lemma `{lemma}` ({pos})")]
    MissingSense { lemma: String, pos: String },

    #[error("instance {instance_id}: no candidate sense matches the gold keys")]
    GoldMismatch { instance_id: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { expected: u32, found: u32 },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("shape incompatibility: expected logit dimension {expected}, found {found}")]
    ShapeIncompatible { expected: usize, found: usize },

    #[error("non-finite loss at batch {batch} (epoch {epoch})")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("instance {instance_id}: {source}")]
    Instance {
        instance_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
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

    pub(crate) fn for_instance(self, instance_id: &str) -> Self {
        Error::Instance {
            instance_id: instance_id.to_string(),
            source: Box::new(self),
        }
    }

    /// Process exit code: 2 for I/O failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::Instance { source, .. } => source.exit_code(),
            _ => 1,
        }
    }

    /// Short machine-readable category used on the stderr error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Xml { .. } => "xml",
            Error::Format { .. } => "format",
            Error::Validation(_) => "validation",
            Error::MissingSense { .. } => "missing-sense",
            Error::GoldMismatch { .. } => "gold-mismatch",
            Error::Precondition(_) => "precondition",
            Error::Encoding(_) => "encoding",
            Error::Input(_) => "input",
            Error::CheckpointVersion { .. } => "checkpoint-version",
            Error::CorruptCheckpoint(_) => "corrupt-checkpoint",
            Error::ShapeIncompatible { .. } => "shape-incompatible",
            Error::NonFiniteLoss { .. } => "non-finite-loss",
            Error::Config(_) => "config",
            Error::Instance { source, .. } => source.kind(),
            Error::Io { .. } => "io",
        }
    }
}
