//! Scenario files, experiment runners and file outputs behind the
//! `flexbeam` command.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod output;
pub mod plot;
pub mod train;

use config::ConfigError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("numeric failure: {0}")]
    Core(#[from] flexbeam::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl From<ConfigError> for HarnessError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Refused(_) => EXIT_CONFIG,
            Self::Numeric(_) | Self::Core(_) => EXIT_NUMERIC,
            Self::Io { .. } => EXIT_IO,
        }
    }
}
