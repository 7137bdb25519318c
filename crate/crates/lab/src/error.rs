use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("{path}:{line}: {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    ConfigFile { path: String, message: String },
    #[error(transparent)]
    Core(#[from] spinglass_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } | Self::ConfigFile { .. } => exit::INVALID_CONFIG,
            Self::Core(spinglass_core::Error::Capacity { .. }) => exit::CAPACITY,
            Self::Core(
                spinglass_core::Error::InvalidSpec(_)
                | spinglass_core::Error::InvalidMonomial(_)
                | spinglass_core::Error::InvalidBeta(_)
                | spinglass_core::Error::DegenerateLadder(_),
            ) => exit::INVALID_CONFIG,
            _ => exit::FAILURE,
        }
    }
}

pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const EXACT_FAILED: i32 = 2;
    pub const INVALID_CONFIG: i32 = 64;
    pub const CAPACITY: i32 = 65;
}

pub type Result<T> = std::result::Result<T, LabError>;
