use std::io;
use std::path::{Path, PathBuf};

use slicegs_core::Error as CoreError;

/// Errors raised by the file formats and commands.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: image::ImageError },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{0}")]
    Argument(String),
    #[error("gradient check failed: max relative error {0:e}")]
    GradCheck(f64),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl AsRef<Path>) -> impl FnOnce(io::Error) -> Error {
        let path = path.as_ref().to_path_buf();
        move |source| Error::Io { path, source }
    }

    pub fn image(path: impl AsRef<Path>) -> impl FnOnce(image::ImageError) -> Error {
        let path = path.as_ref().to_path_buf();
        move |source| Error::Image { path, source }
    }

    pub fn csv(path: impl AsRef<Path>) -> impl FnOnce(csv::Error) -> Error {
        let path = path.as_ref().to_path_buf();
        move |source| Error::Csv { path, source }
    }

    /// 1 for bad arguments or configuration, 2 for data and format
    /// problems, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) => 1,
            Error::Core(CoreError::Validation(_) | CoreError::Config(_)) => 1,
            Error::Core(CoreError::NonFiniteLoss { .. }) | Error::GradCheck(_) => 3,
            Error::Core(_) | Error::Io { .. } | Error::Image { .. } | Error::Csv { .. } => 2,
        }
    }
}

pub(crate) fn format_err(msg: impl Into<String>) -> Error {
    Error::Core(CoreError::Format(msg.into()))
}
