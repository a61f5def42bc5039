//! Batch front end: segment, generate, evaluate and replicate.

pub mod args;
pub mod commands;
mod error;
pub mod io;

pub use args::{Cli, Command};
pub use error::CliError;

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    use clap::Parser;
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("pathsynth: {e}");
            e.exit_code()
        }
    }
}
