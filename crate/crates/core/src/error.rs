use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("token count mismatch: expected {expected} rows per page, found {found}")]
    TokenCountMismatch { expected: usize, found: usize },

    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),

    #[error("duplicate document id `{0}`")]
    DuplicateDocument(String),

    #[error("document `{0}` is not part of the corpus")]
    UnknownDocument(String),

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("k must be at least 1")]
    ZeroK,

    #[error("k-means needs at least {needed} training vectors, got {available}")]
    NotEnoughTrainingData { needed: usize, available: usize },

    #[error("embedding store is incomplete: {missing} of {total} pages have no embedding")]
    IncompleteStore { missing: usize, total: usize },

    #[error("bad magic in {kind} file: expected {expected:?}")]
    BadMagic {
        kind: &'static str,
        expected: &'static str,
    },

    #[error("unsupported {kind} format version {found} (supported: {supported})")]
    UnsupportedVersion {
        kind: &'static str,
        found: u32,
        supported: u32,
    },

    #[error("truncated {kind} file: expected {expected} bytes, found {found}")]
    Truncated {
        kind: &'static str,
        expected: u64,
        found: u64,
    },

    #[error("checksum mismatch in {kind} file: stored {stored:016x}, computed {computed:016x}")]
    Checksum {
        kind: &'static str,
        stored: u64,
        computed: u64,
    },

    #[error("corrupt {kind} file: {reason}")]
    Corrupt { kind: &'static str, reason: String },

    #[error("index does not match the attached corpus: {0}")]
    CorpusMismatch(String),

    #[error("page artifact {path}: {reason}")]
    PageArtifact { path: PathBuf, reason: String },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("generation failed after {attempts} attempt(s): {message}")]
    Generation {
        attempts: usize,
        message: String,
        trace: Box<crate::pipeline::AnswerTrace>,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
