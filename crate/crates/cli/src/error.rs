use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{0}")]
    Empty(String),

    #[error("{stage} stage failed at input line {line}: {message}")]
    Stage {
        stage: &'static str,
        line: u64,
        message: String,
    },

    #[error("unknown {kind} {id:?}")]
    UnknownEntity { kind: &'static str, id: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Other(String),
}

impl CliError {
    /// Process exit status: 2 config, 3 input parse, 4 empty input, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Parse { .. } => 3,
            CliError::Empty(_) => 4,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: u64, message: impl ToString) -> Self {
        CliError::Parse {
            path: path.into(),
            line,
            message: message.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
