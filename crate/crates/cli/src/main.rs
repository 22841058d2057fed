use std::io::ErrorKind;
use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = cflog_cli::Cli::parse();
    let mut stdout = std::io::stdout().lock();
    match cflog_cli::run(cli, &mut stdout) {
        Ok(code) => ExitCode::from(code),
        // reader closed early; nothing left to report
        Err(e) if e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(cflog_cli::EXIT_ERROR)
        }
    }
}
