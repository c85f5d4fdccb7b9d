use std::process::ExitCode;

use byzregs_cli::{execute, Cli, EXIT_ERROR};
use clap::Parser;

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which matches our contract.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    ExitCode::from(execute(&cli) as u8)
}
