use std::process::ExitCode;

use clap::Parser;
use coopbd_cli::{execute, Cli, Command};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let Command::Run(args) = cli.command;
    match execute(args) {
        Ok(result) => {
            for check in result.checks.iter().filter(|c| !c.violations.is_empty()) {
                eprintln!("warning: {}: {}", check.label, check.violations.join("; "));
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
