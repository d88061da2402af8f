//! `crowd-consensus` — run the agreement / allocation experiment pipeline.
//!
//! Exit codes: 0 success, 2 bad input, 3 internal invariant violation.

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<crowd_consensus::Error>() {
        Some(e) if !e.is_input_error() => 3,
        _ => 2,
    }
}
