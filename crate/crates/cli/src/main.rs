use std::process::ExitCode;

use clap::Parser;
use flashcards_cli::commands::{run, Command};
use flashcards_cli::exit_code;

/// Flashcard knowledge capture and replay experiments.
#[derive(Debug, Parser)]
#[command(name = "flashcards", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
