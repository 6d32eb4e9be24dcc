use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}:{line}:{column}: field `{field}`: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    /// Process exit status: 1 for bad input, 2 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config { .. } | HarnessError::Validation(_) => 1,
            HarnessError::Io { .. } | HarnessError::Runtime(_) => 2,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! validation_from {
    ($($t:ty),*) => {$(
        impl From<$t> for HarnessError {
            fn from(e: $t) -> Self {
                HarnessError::Validation(e.to_string())
            }
        }
    )*};
}

validation_from!(gcsam::EngineError, gcsam::GcError);

impl From<gcsam::DataError> for HarnessError {
    fn from(e: gcsam::DataError) -> Self {
        match e {
            gcsam::DataError::Io(_) => HarnessError::Runtime(e.to_string()),
            other => HarnessError::Validation(other.to_string()),
        }
    }
}

impl From<gcsam::OptimError> for HarnessError {
    fn from(e: gcsam::OptimError) -> Self {
        match e {
            gcsam::OptimError::InvalidConfig(_) | gcsam::OptimError::UnsupportedNormOrder(_) => {
                HarnessError::Validation(e.to_string())
            }
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}

impl From<gcsam::AnalysisError> for HarnessError {
    fn from(e: gcsam::AnalysisError) -> Self {
        match e {
            gcsam::AnalysisError::Invalid(_) => HarnessError::Validation(e.to_string()),
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}
