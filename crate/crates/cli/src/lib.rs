//! Configuration, experiment orchestration and file output for the
//! `betasmc` command-line tool.

pub mod config;
pub mod experiment;
pub mod io;
pub mod output;

use std::path::Path;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Runtime(_) => 2,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Runtime(format!("{}: {e}", path.display()))
    }
}

impl From<betasmc::Error> for CliError {
    fn from(e: betasmc::Error) -> Self {
        use betasmc::Error as E;
        match e {
            E::Config(m) => Self::Config(m),
            E::DimensionMismatch { .. } | E::NotClosedForm(_) => Self::Config(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}
