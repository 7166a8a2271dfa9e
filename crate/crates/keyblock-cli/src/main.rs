//! `keyblock` — index, retrieve, segment, prerank, rank, train, eval, analyze
//! and synth subcommands over the keyblock-core pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. Every stochastic path
//! requires an explicit --seed; every run writes an effective-config JSON next
//! to its primary output. KEYBLOCK_LOG in {error,warn,info,debug} controls
//! logging.

mod commands;
mod opts;

use clap::Parser;

use opts::Cli;

/// Usage errors (exit 1) vs data errors (exit 2).
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> CliError {
        CliError::Usage(msg.into())
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

impl From<keyblock_core::Error> for CliError {
    fn from(e: keyblock_core::Error) -> Self {
        CliError::Data(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KEYBLOCK_LOG", "warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help / --version are not errors
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };

    match commands::run(cli) {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            std::process::exit(1);
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}
