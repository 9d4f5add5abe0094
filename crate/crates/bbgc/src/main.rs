use std::process::ExitCode;
use std::sync::Arc;

use bbgc::cli::{run, Cli};
use bbgc::exec::RayonExecutor;
use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli, Arc::new(RayonExecutor::from_env())) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bbgc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
