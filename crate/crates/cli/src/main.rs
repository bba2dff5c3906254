mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{BenchArgs, FinetuneArgs, GenArgs, MetricsArgs, RunArgs, TrainArgs};

#[derive(Debug, Parser)]
#[command(
    name = "shadow",
    version,
    about = "Real-time facial expression shadowing toolkit",
    arg_required_else_help = true
)]
struct Cli {
    /// JSON file whose keys mirror the subcommand's flags; flags win.
    /// Falls back to $VIVID_CONFIG.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic training set to disk.
    Gen(GenArgs),
    /// Train the control regressor.
    Train(TrainArgs),
    /// Run the toy adversarial reconstruction and print its loss history.
    FinetuneDemo(FinetuneArgs),
    /// Stream frames through the shadowing pipeline.
    Run(RunArgs),
    /// Measure pipeline latency under CPU load.
    Bench(BenchArgs),
    /// Compute MAID and AUR from CSV files.
    Metrics(MetricsArgs),
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl From<shadow_core::Error> for CliError {
    fn from(e: shadow_core::Error) -> Self {
        use shadow_core::Error as E;
        match e {
            E::Validation(_) | E::Config(_) | E::Dimension(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{}", e.render());
                    ExitCode::from(1)
                }
            };
        }
    };
    let config = config::config_path(cli.config.as_deref());
    let config = config.as_deref();
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a, config),
        Command::Train(a) => commands::train(a, config),
        Command::FinetuneDemo(a) => commands::finetune_demo(a, config),
        Command::Run(a) => commands::run(a, config),
        Command::Bench(a) => commands::bench(a, config),
        Command::Metrics(a) => commands::metrics(a, config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
