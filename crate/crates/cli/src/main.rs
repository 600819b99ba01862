use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match untangle_cli::run(untangle_cli::Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
