//! `predict`: score unlabeled inputs with a fine-tuned checkpoint and emit
//! one JSON prediction per line.

use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use lexforge_core::classify::{
    load_choice_sets, load_labels, load_texts, predict_choice, predict_label, prediction_record,
    LabelSet,
};

use crate::commands::{
    ensure_dir, load_checkpoint_for, load_tokenizer_dir, NormKind, TaskKind,
};
use crate::fail::{usage, CliResult, Failure};
use crate::manifest::RunManifest;

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Fine-tuned checkpoint to predict with.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Tokenizer directory the checkpoint was trained with.
    #[arg(long)]
    pub tokenizer: PathBuf,
    /// Inputs: one JSON object per line ({"text"} for single-label,
    /// {"context", "choices"} for multiple-choice).
    #[arg(long)]
    pub input: PathBuf,
    /// Label manifest (required for single-label).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Classification shape of the input file.
    #[arg(long, value_enum, default_value_t = TaskKind::SingleLabel)]
    pub task: TaskKind,
    /// Candidate score normalization.
    #[arg(long, value_enum, default_value_t = NormKind::Mean)]
    pub norm: NormKind,
    /// Output directory for predictions.jsonl.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &PredictArgs) -> CliResult {
    let tokenizer = load_tokenizer_dir(&args.tokenizer)?;
    let contents = load_checkpoint_for(&args.checkpoint, &tokenizer)?;
    let model = contents.model;
    let norm = args.norm.to_score_norm();

    let mut lines: Vec<String> = Vec::new();
    match args.task {
        TaskKind::SingleLabel => {
            let labels_path = args.labels.as_ref().ok_or_else(|| {
                usage("--labels is required for --task single-label")
            })?;
            let labels = LabelSet::new(load_labels(labels_path)?, &tokenizer)?;
            let texts = load_texts(&args.input)?;
            for text in &texts {
                let (best, scores) = predict_label(&model, &tokenizer, text, &labels, norm)?;
                lines.push(prediction_record(
                    &labels.labels()[best],
                    labels.labels(),
                    &scores,
                ));
            }
        }
        TaskKind::MultipleChoice => {
            let sets = load_choice_sets(&args.input)?;
            for (context, choices) in &sets {
                let (best, probs) = predict_choice(&model, &tokenizer, context, choices, norm)?;
                lines.push(
                    serde_json::json!({ "predicted": best, "probabilities": probs }).to_string(),
                );
            }
        }
    }

    ensure_dir(&args.out)?;
    let path = args.out.join("predictions.jsonl");
    let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
    for line in &lines {
        writeln!(file, "{line}").map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    file.flush()?;

    let mut manifest = RunManifest::new("predict");
    manifest.add_input("checkpoint", &args.checkpoint);
    manifest.add_input("tokenizer", &args.tokenizer);
    manifest.add_input("input", &args.input);
    if let Some(labels) = &args.labels {
        manifest.add_input("labels", labels);
    }
    manifest
        .config
        .insert("task".into(), format!("{:?}", args.task));
    manifest
        .config
        .insert("norm".into(), format!("{:?}", args.norm));
    manifest.add_artifact(&args.out, "predictions.jsonl")?;
    manifest.write(&args.out)?;

    println!(
        "predict: {} prediction(s) written to {}",
        lines.len(),
        path.display()
    );
    Ok(())
}
