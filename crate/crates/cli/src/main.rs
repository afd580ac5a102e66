//! `ggan`: train, sample, evaluate and verify graphical GAN models.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure,
//! 3 failed verification gate.

mod commands;
mod config;
mod session;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
    Gate(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Gate(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
            CliError::Gate(m) => write!(f, "verification failed: {m}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match commands::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
