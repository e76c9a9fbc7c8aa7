//! Command-line front end for training background word vectors, adapting
//! them per user, and evaluating the resulting mappings.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod synth;

use clap::Parser;

use config::{Cli, Command};
pub use error::{CliError, Result};

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::TrainBackground(a) => commands::cmd_train_background(&a.resolve()?).map(drop),
        Command::Adapt(a) => commands::cmd_adapt(&a.resolve()?).map(drop),
        Command::Eval(a) => commands::cmd_eval(&a.resolve()?).map(drop),
        Command::Synth(a) => commands::cmd_synth(&a.resolve()?).map(drop),
        Command::Probe(a) => commands::cmd_probe(&a.resolve()?).map(drop),
    }
}

/// Parses `args` (including the program name) and runs the subcommand,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
