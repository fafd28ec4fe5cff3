//! `vaeconf`: synthesize data, train the VAE regressor, score confidence,
//! evaluate and export latent coordinates.
//!
//! Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error.

mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let expanded = match config::expand_config(argv) {
        Ok(e) => e,
        Err(err) => {
            eprintln!("error: {err:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(&expanded.argv) {
        Ok(cli) => cli,
        // clap prints usage and exits 2 on errors, 0 for --help/--version
        Err(e) => e.exit(),
    };
    if cli.verbose {
        expanded.report_precedence();
    }

    let result = match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Score(a) => commands::score(a),
        Command::Eval(a) => commands::eval(a),
        Command::ExportLatent(a) => commands::export_latent(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
