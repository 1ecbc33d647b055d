use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("taxel hull exceeds the pixel grid extent: {0}")]
    GridMismatch(String),

    #[error("taxel {taxel} maps outside the image at pixel ({col:.3}, {row:.3})")]
    OutOfBounds { taxel: usize, col: f64, row: f64 },

    #[error("invalid primitive: {0}")]
    InvalidPrimitive(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("force {force} N unreachable: full-thickness penetration yields {max_force} N")]
    ForceUnreachable { force: f64, max_force: f64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("model kind {0} is not differentiable")]
    NonDifferentiableKind(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("kind {kind} is missing version {version}")]
    MissingVersion { kind: String, version: u8 },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("checksum mismatch in {path}: expected {expected}, found {found}")]
    ChecksumMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("sample {id}: {source}")]
    Sample {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    /// The innermost error, looking through per-sample context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Sample { source, .. } => source.root(),
            other => other,
        }
    }
}
