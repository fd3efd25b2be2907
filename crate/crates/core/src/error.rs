use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure classes, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Divergence,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate entity id `{0}`")]
    DuplicateEntity(String),

    #[error("entity `{0}` has an empty name")]
    EmptyEntityName(String),

    #[error("document `{doc_id}` references entity `{entity_id}` which is not in the knowledge base")]
    UnknownEntity { doc_id: String, entity_id: String },

    #[error("span ({start}, {end}) is out of range for a sequence of length {len}")]
    SpanOutOfRange { start: usize, end: usize, len: usize },

    #[error("span ({start}, {end}) is longer than the maximum span length {max}")]
    SpanTooLong { start: usize, end: usize, max: usize },

    #[error("document `{doc_id}`: mention ({start}, {end}) does not fit in a segment of {max_tokens} tokens")]
    Unsegmentable {
        doc_id: String,
        start: usize,
        end: usize,
        max_tokens: usize,
    },

    #[error("sequence of length {len} exceeds the encoder limit of {limit} tokens")]
    SequenceTooLong { len: usize, limit: usize },

    #[error("malformed encoder input: {0}")]
    MalformedInput(String),

    #[error("entity index is empty")]
    EmptyIndex,

    #[error("no predictions to evaluate")]
    EmptyPredictions,

    #[error("corpus contains no mentions")]
    NoMentions,

    #[error("document `{doc_id}` has overlapping gold spans")]
    OverlappingGold { doc_id: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("vocabulary hash mismatch: checkpoint has {expected}, vocabulary has {found}")]
    VocabMismatch { expected: String, found: String },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
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

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Divergence(_) => ErrorKind::Divergence,
            _ => ErrorKind::Data,
        }
    }
}
