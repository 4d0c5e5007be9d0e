use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = saesim_cli::Cli::parse();
    match saesim_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(saesim_cli::exit_code(&err))
        }
    }
}
