//! `hps-sim`: command-line runner for human-physical microgrid scenarios.

mod args;
mod commands;
mod error;
mod output;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::CliError;

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => commands::simulate::run(&cli.common, a),
        Command::Kkt => commands::kkt::run(&cli.common),
        Command::Verify => commands::verify::run(&cli.common),
        Command::Reproduce => commands::reproduce::run(&cli.common),
        Command::Calibrate(a) => commands::calibrate::run(&cli.common, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hps-sim: {e}");
            e.exit_code()
        }
    }
}
