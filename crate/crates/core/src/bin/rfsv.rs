use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use rfsv::cli::{exit_code, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match run(&cli) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    let written = match &cli.global.out {
        Some(path) => std::fs::write(path, &out.csv),
        None => std::io::stdout().write_all(out.csv.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write output: {e}");
        return ExitCode::from(2);
    }
    eprint!("{}", out.summary);
    ExitCode::SUCCESS
}
