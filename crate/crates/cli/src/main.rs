//! `flowgnn` command-line interface.
//!
//! Every command reads an optional TOML config, applies flag overrides,
//! validates the result and writes it to `<out>/config.toml` before running.
//! Rerunning with `--config <out>/config.toml` reproduces the outputs.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{eval, expressivity, gen_data, gradcheck, train, verify_flow};

#[derive(Parser, Debug)]
#[command(name = "flowgnn", version, about = "Flow attention for graph neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    GenData(gen_data::Args),
    Train(train::Args),
    Eval(eval::Args),
    VerifyFlow(verify_flow::Args),
    Expressivity(expressivity::Args),
    Gradcheck(gradcheck::Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data::run(a),
        Command::Train(a) => train::run(a),
        Command::Eval(a) => eval::run(a),
        Command::VerifyFlow(a) => verify_flow::run(a),
        Command::Expressivity(a) => expressivity::run(a),
        Command::Gradcheck(a) => gradcheck::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, message, code) = output::describe(&e);
            eprintln!("error: {kind}: {message}");
            ExitCode::from(code)
        }
    }
}
