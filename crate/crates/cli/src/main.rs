//! `s3a`: file-to-file pipeline stages for the subclass supervised sparse
//! autoencoder.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] s3a::Error),
    #[error("missing input {}", .0.display())]
    MissingInput(PathBuf),
    #[error("{0}")]
    StageMismatch(String),
    #[error("{0}")]
    Config(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.category(),
            CliError::MissingInput(_) => "MissingInput",
            CliError::StageMismatch(_) => "StageMismatch",
            CliError::Config(_) => "InvalidConfig",
        }
    }
}

pub fn require(path: &Path) -> Result<&Path, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::MissingInput(path.to_owned()))
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(require(path)?).map_err(|e| {
        CliError::Core(s3a::Error::Io {
            path: path.to_owned(),
            source: e,
        })
    })
}

#[derive(Debug, Parser)]
#[command(name = "s3a", version, about = "Subclass supervised sparse autoencoder pipeline")]
struct Cli {
    #[command(subcommand)]
    command: commands::Command,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
