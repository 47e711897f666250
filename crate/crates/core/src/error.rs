use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: rating {rating} outside declared scale [{min}, {max}] step {step}")]
    RatingOutOfScale {
        line: usize,
        rating: f64,
        min: f64,
        max: f64,
        step: f64,
    },

    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    HeaderMismatch { expected: String, found: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("protocol eliminates all interactions")]
    AllEliminated,

    #[error("degenerate split")]
    DegenerateSplit,

    #[error("test set too small: {0} test pairs (need at least 10)")]
    TestSetTooSmall(usize),

    #[error("grid too large: {size} protocols exceeds cap {cap}")]
    GridTooLarge { size: usize, cap: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("svd rank {rank} must be below min(n_users, n_items) = {limit}")]
    RankTooLarge { rank: usize, limit: usize },

    #[error("training diverged")]
    TrainingDiverged,

    #[error("non-finite input")]
    NonFinite,

    #[error("empty eligible catalog")]
    EmptyCatalog,

    #[error("no relevant items")]
    NoRelevantItems,

    #[error("degenerate long-tail definition")]
    DegenerateLongTail,

    #[error("undefined correlation")]
    UndefinedCorrelation,

    #[error("insufficient p-datasets")]
    InsufficientPDatasets,

    #[error("missing entry for {metric} / {algorithm}")]
    MissingEntry { metric: String, algorithm: String },

    #[error("incomparable signatures")]
    IncomparableSignatures,

    #[error("too few points: {got} (need at least {need})")]
    TooFewPoints { got: usize, need: usize },

    #[error("zero successful protocols")]
    NoSuccessfulProtocols,

    #[error("serialization: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the input data or a protocol rather than by
    /// configuration or usage.
    pub fn is_data_error(&self) -> bool {
        !matches!(
            self,
            Error::Config(_) | Error::InvalidArgument(_) | Error::GridTooLarge { .. }
        )
    }
}
