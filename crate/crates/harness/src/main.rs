use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = asn_harness::cli::Cli::parse();
    match asn_harness::cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
