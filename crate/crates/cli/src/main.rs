use std::process::ExitCode;

use clap::Parser;
use riesz_cli::{resolve_config, run, Cli, Status};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {:#}", e.0);
            return ExitCode::from(2);
        }
    };
    match run(cli.command, &cfg) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(1),
        Ok(Status::OnlyInfinite) => {
            eprintln!("warning: output contains only infinite verdicts");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
