use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("segment index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    /// Even the all-lowest path misses a deadline. `segment` is 1-based.
    #[error("infeasible: segment {segment} misses its deadline of {deadline_s} s by {excess_bytes} bytes even at the lowest quality")]
    Infeasible {
        segment: usize,
        deadline_s: f64,
        excess_bytes: u64,
    },

    #[error("instance too large for exhaustive search: {size} paths exceeds {limit}")]
    TooLarge { size: f64, limit: f64 },

    #[error("trace delivers no data; download of {0} bytes never completes")]
    UnboundedWait(f64),

    #[error("adaptation logic returned level {level} for segment {segment}, valid range is 1..={r}")]
    ProtocolViolation { segment: usize, level: usize, r: usize },

    #[error("representation count mismatch: model has {model}, video has {video}")]
    RepresentationMismatch { model: usize, video: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("degenerate corpus: {0}")]
    DegenerateCorpus(String),

    #[error("video {video}, start {start_s} s: {source}")]
    Pair {
        video: usize,
        start_s: u32,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// Strips `Pair` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Pair { source, .. } => source.root(),
            e => e,
        }
    }
}
