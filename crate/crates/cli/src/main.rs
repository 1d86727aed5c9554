mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => commands::train_cmd(a),
        Command::Detect(a) => commands::detect_cmd(a),
        Command::Track(a) => commands::track_cmd(a),
        Command::Eval(a) => commands::eval_cmd(a),
        Command::Bench(a) => commands::bench_cmd(a),
        Command::Saliency(a) => commands::saliency_cmd(a),
        Command::Render(a) => commands::render_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code() as u8)
        }
    }
}
