use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid parameter `{field}`: {reason}")]
    Param { field: String, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("replay rejected: {0}")]
    Replay(String),

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Param {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }

    /// True for errors caused by the caller's configuration rather than the environment.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Grid(_) | Error::Param { .. } | Error::Config(_) | Error::Replay(_)
        )
    }
}
