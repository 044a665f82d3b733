use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),

    #[error("transform error: {0}")]
    Transform(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    TrainDiverged { epoch: usize, detail: String },

    #[error("training error: {0}")]
    Train(String),

    #[error("assignment error: {0}")]
    Assignment(String),

    #[error("metrics error: {0}")]
    Metrics(String),

    #[error("pipeline stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wraps an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
