use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("friend pair references unknown user `{0}`")]
    UnknownUser(String),

    #[error("duplicate venue id `{0}` in venues file")]
    DuplicateVenue(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("objective became non-finite at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("optimization diverged at epoch {epoch} (objective {objective:e}); use a smaller learning rate")]
    Diverged { epoch: usize, objective: f64 },

    #[error("both classes must be present (positives = {positives}, negatives = {negatives})")]
    SingleClass { positives: usize, negatives: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("id table hash mismatch for {table}: file declares {declared}, contents hash to {computed}")]
    HashMismatch {
        table: String,
        declared: String,
        computed: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
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
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// True for errors caused by bad configuration rather than a failing stage.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
