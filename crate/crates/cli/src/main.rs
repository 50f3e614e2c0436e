//! `tkgx`: rule mining, view construction, training, evaluation, ablations,
//! robustness sweeps and synthetic data generation.

mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;
use tkg_core::{CoreError, ErrorCategory};

/// Process exit status for a failed command.
fn exit_code(err: &anyhow::Error) -> u8 {
    let category = err
        .chain()
        .find_map(|e| e.downcast_ref::<CoreError>())
        .map(CoreError::category);
    match category {
        Some(ErrorCategory::Config) => 2,
        Some(ErrorCategory::Data) => 3,
        Some(ErrorCategory::Shape) => 4,
        Some(ErrorCategory::Numeric) => 5,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = args::Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
