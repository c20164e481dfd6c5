//! Command-line front end for `lapgraph`: CSV in, CSV/JSON out.

pub mod args;
pub mod commands;
pub mod error;
pub mod io;

use std::ffi::OsString;

use clap::Parser;

pub use error::{CliError, CliResult};

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Errors are reported on stderr.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { error::EXIT_USAGE } else { error::EXIT_OK };
        }
    };
    match commands::run(cli) {
        Ok(()) => error::EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
