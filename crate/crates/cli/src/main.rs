mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use mmcse::ErrorKind;

use args::{Cli, Command};

fn run(cli: &Cli) -> mmcse::Result<()> {
    match &cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Eval(a) => commands::eval(a),
        Command::GradCheck(a) => commands::grad_check(a),
        Command::ExportCooc(a) => commands::export_cooc(a),
        Command::ExportEmbeddings(a) => commands::export_embeddings(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version are successes; every other parse failure is a usage error.
            return ExitCode::from(if e.exit_code() == 0 { 0 } else { 1 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 1,
                ErrorKind::Validation => 2,
                ErrorKind::Numeric => 3,
            })
        }
    }
}
