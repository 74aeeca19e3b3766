//! `dlf`: command-line front end for the double linear feedback toolkit.
//!
//! Scalar results are JSON, series are CSV. Every file written is
//! accompanied by a manifest recording the command, its parameters, the
//! seed and the tool version. Exit codes: 0 success, 2 usage error,
//! 3 domain or input error, 4 internal-consistency violation.

mod commands;
mod config;
mod manifest;

use std::path::Path;
use std::process::ExitCode;

use clap::Parser;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(dlf_core::Error),
    Io {
        path: String,
        source: std::io::Error,
    },
    Internal(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_internal() => 4,
            CliError::Core(_) | CliError::Io { .. } => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{path}: {source}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<dlf_core::Error> for CliError {
    fn from(e: dlf_core::Error) -> Self {
        CliError::Core(e)
    }
}

fn main() -> ExitCode {
    let cli = commands::Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dlf: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
