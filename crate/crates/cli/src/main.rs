//! `fdx`: FDX-controlling multiple testing from the command line.

mod bench;
mod input;
mod simulate;
mod test_cmd;

use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Failure classes mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid input or arguments (exit 2).
    Input(String),
    /// A model could not be estimated from the data (exit 3).
    Estimation(String),
    /// Full scan and shortcut procedure disagree (exit 4).
    Mismatch(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Estimation(_) => 3,
            CliError::Mismatch(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Estimation(m) | CliError::Mismatch(m) => m,
        }
    }
}

impl From<fdx_core::FdxError> for CliError {
    fn from(e: fdx_core::FdxError) -> Self {
        match e {
            fdx_core::FdxError::Estimation(_) => CliError::Estimation(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

pub fn to_json<T: serde::Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::Input(format!("cannot encode JSON: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Parser)]
#[command(
    name = "fdx",
    version,
    about = "Multiple testing with false discovery exceedance control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test a file of z-values.
    Test(test_cmd::TestArgs),
    /// Run a simulation study.
    Simulate(simulate::SimulateArgs),
    /// Time the full scan against the shortcut procedure.
    Bench(bench::BenchArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Test(args) => test_cmd::run(&args),
        Command::Simulate(args) => simulate::run(&args),
        Command::Bench(args) => bench::run(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
