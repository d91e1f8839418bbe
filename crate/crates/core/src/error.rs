use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("frame sequence must have at least one frame and one dimension (got {rows}x{cols})")]
    EmptySequence { rows: usize, cols: usize },

    #[error("non-finite value at frame {frame}, dimension {dim}")]
    NonFinite { frame: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("accumulator has seen no frames")]
    EmptyAccumulator,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("embedding has zero norm")]
    ZeroNorm,

    #[error("score set needs at least one target and one nontarget trial")]
    MissingClass,

    #[error("trial lists of fused systems do not match: {0}")]
    TrialMismatch(String),

    #[error("training data contains a single class")]
    SingleClass,

    #[error("label class {label} has only {count} utterance(s); at least 2 are needed to split")]
    ClassTooSmall { label: usize, count: usize },

    #[error("requested {requested} {kind} trials but only {available} distinct pairs exist")]
    InsufficientPairs {
        kind: &'static str,
        requested: usize,
        available: usize,
    },

    #[error("non-finite loss at training step {step}")]
    NonFiniteLoss { step: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("missing artifacts: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingArtifacts(Vec<PathBuf>),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
