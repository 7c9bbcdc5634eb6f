mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::Failure;

fn run() -> Result<(), Failure> {
    let mut argv: Vec<_> = std::env::args_os().collect();
    if let Some(path) = config::take_config(&mut argv).map_err(Failure::Validation)? {
        let flags = config::config_flags(path.as_ref()).map_err(Failure::Validation)?;
        config::splice(&mut argv, flags);
    }
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return Ok(());
        }
        Err(e) => return Err(Failure::Validation(e.render().to_string())),
    };
    match cli.command {
        Command::Datagen(kind) => commands::datagen(kind),
        Command::Estimate(cmd) => commands::estimate(cmd),
        Command::Replicate(cmd) => commands::replicate(cmd),
        Command::Compare(args) => commands::compare(args),
        Command::Bench(args) => commands::bench(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("{}", msg.trim_end());
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
