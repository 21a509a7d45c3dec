use std::process::ExitCode;

use clap::Parser;
use e2m_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outputs) => {
            for path in outputs {
                println!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("e2m: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
