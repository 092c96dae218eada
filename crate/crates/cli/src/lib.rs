//! The `fhirforge` command line, usable in-process through [`run_from`].

pub mod args;
mod evaluate;
mod inspect;
mod render;
mod replay;
mod translate;

use std::ffi::OsString;

use clap::Parser;

pub use args::{Cli, Command};

pub const EXIT_OK: u8 = 0;
/// Bad input, setup failure, validation errors.
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_BUDGET: u8 = 2;
pub const EXIT_PROVIDER: u8 = 3;
pub const EXIT_DIVERGENCE: u8 = 4;
pub const EXIT_TRUNCATED: u8 = 5;

/// Parses arguments (program name first) and runs the command.
pub async fn run_from<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    // clap would exit 2 on usage errors, which is taken by budget exhaustion.
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli).await,
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_FAILURE
            } else {
                EXIT_OK
            }
        }
    }
}

pub async fn run(cli: Cli) -> u8 {
    let result = match cli.command {
        Command::Translate(a) => translate::run(a).await,
        Command::Replay(a) => replay::run(a).await,
        Command::Validate(a) => inspect::validate(a).await,
        Command::Search(a) => inspect::search(a).await,
        Command::Evaluate(a) => evaluate::run(a),
        Command::Corpus(a) => inspect::corpus(a),
        Command::Serve(a) => inspect::serve(a).await,
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        EXIT_FAILURE
    })
}
