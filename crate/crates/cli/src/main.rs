use std::process::ExitCode;

use clap::Parser;
use tailgauge_cli::commands::execute;
use tailgauge_cli::config::Cli;
use tailgauge_cli::exit_code;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = cli.opts.resolve(cli.command).and_then(|cfg| execute(&cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
