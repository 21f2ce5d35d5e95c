use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    hasopt_cli::main_with(hasopt_cli::Cli::parse())
}
