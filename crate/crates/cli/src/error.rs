use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{context}: {source}")]
    Model {
        context: String,
        #[source]
        source: sgplfm::Error,
    },
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub(crate) trait Context<T> {
    fn context(self, ctx: impl Into<String>) -> Result<T>;
}

impl<T> Context<T> for sgplfm::Result<T> {
    fn context(self, ctx: impl Into<String>) -> Result<T> {
        self.map_err(|source| CliError::Model {
            context: ctx.into(),
            source,
        })
    }
}

pub(crate) fn io_err(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}
