use thiserror::Error;

use crate::metrics::RunMetrics;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] blockwise::Error),

    #[error("invalid run configuration: {0}")]
    Config(String),

    #[error("runs cannot be compared: {0}")]
    Comparison(String),

    #[error("loss became non-finite at step {step}")]
    Diverged {
        step: u64,
        /// Rows up to and including the failing step.
        partial: Box<RunMetrics>,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl HarnessError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
