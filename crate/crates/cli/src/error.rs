use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mtpp_core::Error),
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("no checkpoint at {0}")]
    MissingCheckpoint(PathBuf),
    #[error("no conflict diagnostics at {0}")]
    MissingDiagnostics(PathBuf),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub(crate) fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Self {
        let context = context.into();
        move |source| Self::Io { context, source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
