mod experiment;
mod gen;
mod solve;
mod theory;

use crate::args::{Cli, Command};
use crate::error::CliResult;

pub fn run(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Gen(a) => gen::run(a),
        Command::Solve(a) => solve::run(a, cli.strict),
        Command::Experiment(a) => experiment::run(a, cli.threads, cli.strict),
        Command::Theory(p) => theory::run(p, cli.strict),
    }
}
