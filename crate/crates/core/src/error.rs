use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid geometry {rows}x{cols}")]
    InvalidGeometry { rows: usize, cols: usize },

    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("task `{task}` does not support a {rows}x{cols} grid: {reason}")]
    UnsupportedGeometry { task: String, rows: usize, cols: usize, reason: String },

    #[error("episode has ended; call reset before step")]
    EpisodeEnded,

    #[error("feature length {got} does not match approximator input size {expected}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("table backend needs one-hot features: {0}")]
    NotOneHot(String),

    #[error("action mask has no permitted action")]
    EmptyMask,

    #[error("unknown level id {0}")]
    UnknownLevel(usize),

    #[error("no snapshot published for level {0}")]
    NoSnapshot(usize),

    #[error("goal-ordering checksum mismatch: file {file:#018x}, expected {expected:#018x}")]
    ChecksumMismatch { file: u64, expected: u64 },

    #[error("malformed parameter file: {0}")]
    Format(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("channel closed: {0}")]
    Disconnected(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
