//! `aiot-sim`: run, sweep and compare inventory simulations from the command line.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("aiot-sim: error: {e}");
            ExitCode::FAILURE
        }
    }
}
