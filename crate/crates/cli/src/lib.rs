//! Command-line driver: vectorize, group, train, grid, evaluate, curves and
//! top-weights.

pub mod model_file;

mod commands;

use std::ffi::OsString;
use std::fmt;

use clap::error::ErrorKind;
use clap::Parser;

pub use commands::Cli;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const DATA: i32 = 2;
    pub const NUMERIC: i32 = 3;
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(lomp::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

impl From<lomp::Error> for CliError {
    fn from(e: lomp::Error) -> Self {
        CliError::Data(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Data(lomp::Error::AllFitsFailed(_)) => exit::NUMERIC,
            CliError::Data(_) => exit::DATA,
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Diagnostics go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => exit::OK,
                _ => exit::USAGE,
            };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("lomp: {e}");
            e.exit_code()
        }
    }
}
