mod commands;
mod error;
mod manifest;

use std::error::Error as _;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{RobustnessArgs, ScenarioArgs, SynthArgs, TrainArgs};

/// Synthetic panels, dual-target GNN training, CBAM scenarios and robustness checks.
#[derive(Debug, Parser)]
#[command(name = "cbamnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic graph and hourly panel.
    Synth(SynthArgs),
    /// Train the model and write a checkpoint and training report.
    Train(TrainArgs),
    /// Evaluate counterfactual impacts of a scenario file.
    Scenario(ScenarioArgs),
    /// Sensitivity sweeps, placebos and the spatial-lag baseline.
    Robustness(RobustnessArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Scenario(a) => commands::scenario(a),
        Command::Robustness(a) => commands::robustness(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut message = e.to_string();
            let mut source = e.source();
            while let Some(s) = source {
                let text = s.to_string();
                if !message.contains(&text) {
                    message.push_str(&format!(": {text}"));
                }
                source = s.source();
            }
            eprintln!("error[{}]: {message}", e.kind());
            ExitCode::FAILURE
        }
    }
}
