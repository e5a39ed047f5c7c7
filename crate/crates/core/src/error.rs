use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, AtrError>;

#[derive(Debug, Error)]
pub enum AtrError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A NaN or infinity showed up where only finite values are allowed.
    #[error("numeric failure in {location}: {detail}")]
    Numeric { location: String, detail: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    /// A pipeline stage failed; `source` says why.
    #[error("{step}: {source}")]
    Step {
        step: String,
        #[source]
        source: Box<AtrError>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl AtrError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AtrError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn numeric(location: impl Into<String>, detail: impl Into<String>) -> Self {
        AtrError::Numeric {
            location: location.into(),
            detail: detail.into(),
        }
    }

    pub fn in_step(step: impl Into<String>, source: AtrError) -> Self {
        AtrError::Step {
            step: step.into(),
            source: Box::new(source),
        }
    }

    /// The innermost error below any step wrappers.
    pub fn root(&self) -> &AtrError {
        match self {
            AtrError::Step { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn format(what: &'static str, detail: impl Into<String>) -> Self {
        AtrError::Format {
            what,
            detail: detail.into(),
        }
    }
}
