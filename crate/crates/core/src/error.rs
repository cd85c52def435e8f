use std::path::PathBuf;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Caller passed inconsistent arguments (shapes, sizes, options).
    Usage,
    /// A file or record did not conform to its format.
    Data,
    /// A computation produced non-finite values.
    Numerical,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("EMB1 header: {0}")]
    MalformedHeader(String),
    #[error("EMB1 payload truncated: header declares {expected} bytes of floats, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("EMB1 payload has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("count mismatch: {vectors} vectors but {ids} id records")]
    CountMismatch { vectors: usize, ids: usize },
    #[error("row {row} contains a non-finite value")]
    NonFiniteRow { row: usize },
    #[error("row {row} is a zero vector")]
    ZeroRow { row: usize },
    #[error("duplicate record id {0}")]
    DuplicateId(i64),
    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("word {0:?} is not in the vocabulary")]
    UnknownToken(String),
    #[error("token id {0} is out of range")]
    BadTokenId(usize),
    #[error("too many slot words: {objects} objects (max {max_objects}), {relations} relations (max {max_relations})")]
    OversizedSlots {
        objects: usize,
        relations: usize,
        max_objects: usize,
        max_relations: usize,
    },

    #[error("backward called without a recorded forward pass")]
    BackwardWithoutForward,
    #[error("sequence of length {len} exceeds the decoder context of {max}")]
    ContextOverflow { len: usize, max: usize },
    #[error("loss mask selects no positions")]
    EmptyMask,
    #[error("non-finite loss at batch sample {sample} (image {image_id})")]
    NonFiniteLoss { sample: usize, image_id: i64 },

    #[error("empty corpus")]
    EmptyCorpus,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Invalid(String),
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
            Error::DimensionMismatch { .. }
            | Error::OversizedSlots { .. }
            | Error::BackwardWithoutForward
            | Error::ContextOverflow { .. }
            | Error::Invalid(_) => ErrorKind::Usage,
            Error::ZeroNorm
            | Error::NonFinite(_)
            | Error::NonFiniteLoss { .. }
            | Error::EmptyMask => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
