use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("index {index} out of range for {what} of size {len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid segment id {id} (num_segments = {num_segments})")]
    InvalidSegment { id: usize, num_segments: usize },

    #[error("graph contains a directed cycle")]
    Cycle,

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("self-loop on node {0}")]
    SelfLoop(usize),

    #[error("expected a unique final node, found {0}")]
    MultipleRoots(usize),

    #[error("computation tree would exceed {limit} nodes")]
    TreeTooLarge { limit: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("loss must be a scalar, got shape {0}x{1}")]
    NonScalarLoss(usize, usize),

    #[error("missing source injection for edge ({0}, {1})")]
    MissingInjection(usize, usize),

    #[error("empty pooling set: {0}")]
    EmptyPool(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
