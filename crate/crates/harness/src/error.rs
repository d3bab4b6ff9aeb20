use std::path::PathBuf;

use smoothgnn_core::CoreError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical abort at epoch {epoch}, step {step}: {source}")]
    Numerical {
        epoch: usize,
        step: usize,
        #[source]
        source: CoreError,
    },
    #[error("{context} {path}: {source}")]
    Io {
        context: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl HarnessError {
    /// Process exit code: 2 config, 3 data, 4 numerical, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Data(_) => 3,
            HarnessError::Numerical { .. } => 4,
            HarnessError::Core(CoreError::NonFinite(_)) => 4,
            _ => 1,
        }
    }

    pub fn io(context: &'static str, path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::Io { context, path, source }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
