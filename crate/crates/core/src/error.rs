use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file. `line` is 1-based and counts the header.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: String,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("subset too small: {n} respondents (need at least 2)")]
    SubsetTooSmall { n: usize },

    #[error("degenerate items (all-correct or all-incorrect): {items:?}")]
    DegenerateItems { items: Vec<u32> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("model not identified: {0}")]
    NotIdentified(String),

    #[error("{method} did not converge after {iterations} iterations (last change {last_change:.3e})")]
    NoConvergence {
        method: &'static str,
        iterations: usize,
        last_change: f64,
        trace: Vec<f64>,
    },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: String,
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
    pub(crate) fn parse(line: usize, column: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            column: column.into(),
            message: message.into(),
        }
    }

    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}
