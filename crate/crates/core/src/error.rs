use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid scenario or model configuration. `field` names the offending entry.
    #[error("configuration error in `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: String,
        got: String,
    },

    #[error("schedule error at step {step}: {msg}")]
    Schedule { step: usize, msg: String },

    #[error("fusion error: {0}")]
    Fusion(String),

    #[error("bookkeeping error: {0}")]
    Bookkeeping(String),

    #[error("stage error: {0}")]
    Stage(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }

    pub fn dim(what: impl Into<String>, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            what: what.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::Dimension { .. } | Error::Schedule { .. }
        )
    }
}
