use std::path::PathBuf;

/// Errors from the shared primitives (validation and file I/O).
#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad GCSF file {path}: {why}")]
    Format { path: PathBuf, why: String },

    #[error("bad json in {path}: {why}")]
    Json { path: PathBuf, why: String },
}

impl CoreError {
    pub fn invalid(what: &'static str, why: impl Into<String>) -> Self {
        CoreError::Invalid { what, why: why.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, why: impl Into<String>) -> Self {
        CoreError::Format { path: path.into(), why: why.into() }
    }
}
