mod args;
mod embedder;
mod error;
mod generate;
mod grid;
mod manifest;
mod prep;
mod score;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => error::USAGE,
            };
            std::process::exit(code);
        }
    };

    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match &cli.command {
        Command::Ingest(a) => prep::ingest(a),
        Command::Convert(a) => prep::convert(a),
        Command::Generate(a) => generate::generate(a),
        Command::Rank(a) => score::rank(a),
        Command::Eval(a) => score::eval(a),
        Command::Sweep(a) => score::sweep(a),
    };
    let code = match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    };
    std::process::exit(code);
}
