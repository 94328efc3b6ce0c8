mod args;
mod commands;
mod error;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};

use args::Cli;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if e.kind() == ErrorKind::InvalidSubcommand {
                let _ = e.print();
                list_subcommands();
                return ExitCode::from(2);
            }
            e.exit();
        }
    };
    init_logger(cli.verbose, cli.quiet);
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

/// After an unknown subcommand, names the valid ones of the innermost
/// command given on the command line.
fn list_subcommands() {
    let mut cmd = Cli::command();
    for arg in std::env::args().skip(1) {
        match cmd.find_subcommand(&arg) {
            Some(sub) if sub.has_subcommands() => cmd = sub.clone(),
            _ => {}
        }
    }
    let names: Vec<&str> = cmd.get_subcommands().map(|s| s.get_name()).collect();
    eprintln!("available: {}", names.join(", "));
}

fn init_logger(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Warn,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("EIGENMAT_LOG")
        .format_timestamp(None)
        .init();
}
