use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = match bntt::cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(e) = bntt::parallel::init_thread_pool() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match bntt::cli::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
