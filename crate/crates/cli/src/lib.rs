//! Library backing the `optoferm` command-line tool: configuration
//! parsing, CSV/JSON input and output, and the command implementations.

pub mod config;
pub mod io;
pub mod run;

use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes. Code 1 is left to the runtime for panics.
pub mod exit {
    pub const OK: u8 = 0;
    pub const DATA: u8 = 2;
    pub const NUMERICAL: u8 = 3;
    pub const INFEASIBLE: u8 = 4;
    pub const CONFIG: u8 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] optoferm_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: invalid JSON: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(err) => match err {
                optoferm_core::Error::Domain(_) | optoferm_core::Error::Data(_) => exit::DATA,
                optoferm_core::Error::Numerical(_) | optoferm_core::Error::Integration { .. } => {
                    exit::NUMERICAL
                }
                optoferm_core::Error::Infeasible(_) => exit::INFEASIBLE,
                optoferm_core::Error::Config(_) => exit::CONFIG,
            },
            CliError::Data(_) => exit::DATA,
            CliError::Io { .. } | CliError::Json { .. } | CliError::Config(_) => exit::CONFIG,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
