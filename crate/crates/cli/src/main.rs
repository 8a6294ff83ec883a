mod args;
mod commands;
mod io;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    // Graph warnings are reported per file by the commands themselves.
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn,crystalnet::atomgraph=error"))
        .format_timestamp(None)
        .init();
    let cli = args::Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
