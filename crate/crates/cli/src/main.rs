use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use ml_locality_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(paths) => {
            let mut out = std::io::stdout().lock();
            for p in paths {
                if writeln!(out, "wrote {}", p.display()).is_err() {
                    break;
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
