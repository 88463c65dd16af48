//! Experiment harness: dataset/model lifecycle, attack runs, baseline
//! sweeps, transfer matrices, channel simulations, and report generation.
//!
//! Every subcommand is a pure function of its flags, config file, seed and
//! input artifacts; re-running one overwrites its outputs byte for byte.
//! Exit codes: 0 success, 1 validation or usage error, 2 runtime error.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod data;

use clap::Parser;
use flicker_core::error::Error;

#[derive(Debug, Parser)]
#[command(
    name = "flicker",
    about = "Per-frame uniform RGB (flickering) adversarial perturbations \
             against a small differentiable video classifier",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: commands::Command,
}

/// Entry point shared by the binary and the tests. Takes the arguments
/// after the program name and returns the process exit code.
pub fn run<I>(args: I) -> i32
where
    I: IntoIterator,
    I::Item: Into<String>,
{
    let mut argv: Vec<String> = vec!["flicker".to_string()];
    argv.extend(args.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            // clap renders its own message (help goes to stdout)
            let _ = err.print();
            return code;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {}", err);
            exit_code(&err)
        }
    }
}

/// Map error kinds onto the documented exit codes.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Validation(_) | Error::Shape(_) | Error::Format { .. } | Error::Calibration(_) => 1,
        Error::Training { .. } | Error::Optimization { .. } | Error::Io(_) | Error::Json(_) => 2,
    }
}
