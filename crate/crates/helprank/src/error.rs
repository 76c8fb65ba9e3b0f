use std::path::Path;

use helprank_core::Error as CoreError;

/// Failure classes of the command-line driver, mapped onto exit codes.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    /// Bad input: unreadable file, schema violation, invalid flag or config.
    #[error("{0}")]
    Validation(String),
    /// Failure while running a valid request, such as training divergence.
    #[error("{0}")]
    Runtime(String),
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Validation(_) => 1,
            AppError::Runtime(_) => 2,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        AppError::Validation(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        AppError::Runtime(msg.into())
    }

    pub fn read(path: &Path, err: std::io::Error) -> Self {
        AppError::Validation(format!("cannot read {}: {err}", path.display()))
    }

    pub fn write(path: &Path, err: impl std::fmt::Display) -> Self {
        AppError::Runtime(format!("cannot write {}: {err}", path.display()))
    }
}

impl From<CoreError> for AppError {
    fn from(err: CoreError) -> Self {
        match err {
            CoreError::Diverged { .. } => AppError::Runtime(err.to_string()),
            _ => AppError::Validation(err.to_string()),
        }
    }
}
