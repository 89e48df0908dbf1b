//! `lexforge`: train, fine-tune, and evaluate small byte-level language
//! models end to end — tokenizer training, corpus ingestion, pretraining,
//! label-tag classification, prediction, metrics, and loss charts.

mod commands;
mod fail;
mod manifest;
mod svg;

use clap::{Parser, Subcommand};

use crate::fail::CliResult;

#[derive(Debug, Parser)]
#[command(
    name = "lexforge",
    version,
    about = "Desk-scale byte-level language model pipeline",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn a byte-pair vocabulary from a corpus directory.
    TrainTokenizer(commands::train_tokenizer::TrainTokenizerArgs),
    /// Tokenize a corpus into binary shards plus an index.
    Ingest(commands::ingest::IngestArgs),
    /// Train a model over ingested shards (resumable).
    Pretrain(commands::pretrain::PretrainArgs),
    /// Fine-tune a checkpoint into a label classifier.
    Finetune(commands::finetune::FinetuneArgs),
    /// Predict labels or choices for unlabeled inputs.
    Predict(commands::predict::PredictArgs),
    /// Score a labeled dataset and write a metrics report.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Chart one or more training logs as CSV + SVG.
    LossCurve(commands::loss_curve::LossCurveArgs),
}

fn dispatch(command: &Command) -> CliResult {
    match command {
        Command::TrainTokenizer(args) => commands::train_tokenizer::run(args),
        Command::Ingest(args) => commands::ingest::run(args),
        Command::Pretrain(args) => commands::pretrain::run(args),
        Command::Finetune(args) => commands::finetune::run(args),
        Command::Predict(args) => commands::predict::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::LossCurve(args) => commands::loss_curve::run(args),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version are successful exits; everything else a clap
            // parser rejects is a usage error.
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => {}
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            std::process::exit(failure.exit_code());
        }
    }
}
