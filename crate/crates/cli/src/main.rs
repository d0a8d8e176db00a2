use std::process::ExitCode;

use clap::Parser;
use suballoc_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            if !cli.quiet {
                println!("{}", serde_json::to_string_pretty(&outcome.report).expect("report serializes"));
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {} failed: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
