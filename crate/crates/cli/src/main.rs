use std::io::{self, Write};
use std::process::ExitCode;

use bitjoin_cli::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    let result = run(&cli, &mut lock);
    let _ = lock.flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bitjoin: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
