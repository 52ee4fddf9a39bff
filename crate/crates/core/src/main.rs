use std::process::ExitCode;

use clap::Parser;
use coxswitch::cli::{init_threads, run, Cli, Status};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = init_threads().and_then(|()| run(&cli)).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        Status::from_error(&e)
    });
    ExitCode::from(status as u8)
}
