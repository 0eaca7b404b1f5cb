//! Command implementations behind the `gisbo` binary.

pub mod commands;
pub mod config;
pub mod plot;

use gisbo::stats::MissingCell;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("incomplete results: {} missing (algorithm, problem, seed) cells", .0.len())]
    Missing(Vec<MissingCell>),

    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Missing(_) => 3,
            CliError::Failed(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<gisbo::Error> for CliError {
    fn from(e: gisbo::Error) -> Self {
        match e {
            gisbo::Error::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Failed(other.to_string()),
        }
    }
}
