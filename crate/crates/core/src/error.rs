use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{what} index {index} out of range (bound {bound})")]
    Index {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("backward already ran on this graph; reset it before differentiating again")]
    BackwardTwice,

    #[error("optimizer state corrupted: {0}")]
    StateCorruption(String),

    #[error("{what}: parse error at byte {offset}: {msg}")]
    Parse {
        what: &'static str,
        offset: u64,
        msg: String,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sequence of length {len} exceeds the context window of {max}")]
    Context { len: usize, max: usize },

    #[error("tokens ({tokens}) and frames ({frames}) differ by more than 2 positions")]
    Misaligned { tokens: usize, frames: usize },

    #[error("vocabulary violation: id {id} >= vocab {vocab}")]
    Vocabulary { id: usize, vocab: usize },

    #[error("corpus is empty or too small: {0}")]
    EmptyCorpus(String),

    #[error("corpus has {distinct} distinct frames but k = {k}; use a smaller k")]
    TooFewDistinct { distinct: usize, k: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn parse(what: &'static str, offset: u64, msg: impl Into<String>) -> Self {
        Error::Parse {
            what,
            offset,
            msg: msg.into(),
        }
    }

    /// Attaches a file path to an error.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}
