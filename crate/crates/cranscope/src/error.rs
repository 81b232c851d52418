use std::fmt::Display;
use std::path::Path;

use thiserror::Error;

pub type AppResult<T> = std::result::Result<T, AppError>;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Data {
        context: String,
        #[source]
        source: cranscope_core::Error,
    },
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<AppError>,
    },
}

impl AppError {
    pub fn data(context: impl Into<String>, source: cranscope_core::Error) -> Self {
        Self::Data {
            context: context.into(),
            source,
        }
    }

    pub fn file(path: &Path, message: impl Display) -> Self {
        Self::File {
            path: path.display().to_string(),
            message: message.to_string(),
        }
    }

    /// Process exit status: 64 usage, 2 data or fit, 1 pipeline stage.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 64,
            Self::Data { .. } | Self::File { .. } => 2,
            Self::Stage { .. } => 1,
        }
    }
}

pub trait StageExt<T> {
    /// Attribute an error to a named pipeline stage.
    fn stage(self, stage: &'static str) -> AppResult<T>;
}

impl<T> StageExt<T> for AppResult<T> {
    fn stage(self, stage: &'static str) -> AppResult<T> {
        self.map_err(|e| match e {
            AppError::Usage(_) | AppError::Stage { .. } => e,
            other => AppError::Stage {
                stage,
                source: Box::new(other),
            },
        })
    }
}

pub trait DataExt<T> {
    fn context(self, context: impl FnOnce() -> String) -> AppResult<T>;
}

impl<T> DataExt<T> for cranscope_core::Result<T> {
    fn context(self, context: impl FnOnce() -> String) -> AppResult<T> {
        self.map_err(|e| AppError::data(context(), e))
    }
}
