//! `evaluate`: score a labeled dataset and write a metrics report.

use std::path::PathBuf;

use clap::Args;
use lexforge_core::classify::{load_labeled, load_labels, load_multiple_choice, LabelSet};
use lexforge_core::eval::{
    evaluate_multiple_choice, evaluate_single_label, write_report, RunMetadata,
};
use lexforge_core::util::fnv1a_file;

use crate::commands::{
    ensure_dir, load_checkpoint_for, load_tokenizer_dir, NormKind, TaskKind,
};
use crate::fail::{usage, CliResult};
use crate::manifest::RunManifest;

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Fine-tuned checkpoint to evaluate.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Tokenizer directory the checkpoint was trained with.
    #[arg(long)]
    pub tokenizer: PathBuf,
    /// Labeled dataset: one JSON object per line ({"text", "label"} or
    /// {"context", "choices", "answer"}).
    #[arg(long)]
    pub data: PathBuf,
    /// Label manifest (required for single-label).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Classification shape of the dataset.
    #[arg(long, value_enum, default_value_t = TaskKind::SingleLabel)]
    pub task: TaskKind,
    /// Candidate score normalization.
    #[arg(long, value_enum, default_value_t = NormKind::Mean)]
    pub norm: NormKind,
    /// Output directory for report.json.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &EvaluateArgs) -> CliResult {
    let tokenizer = load_tokenizer_dir(&args.tokenizer)?;
    let contents = load_checkpoint_for(&args.checkpoint, &tokenizer)?;
    let model = contents.model;
    let norm = args.norm.to_score_norm();

    let report = match args.task {
        TaskKind::SingleLabel => {
            let labels_path = args.labels.as_ref().ok_or_else(|| {
                usage("--labels is required for --task single-label")
            })?;
            let labels = LabelSet::new(load_labels(labels_path)?, &tokenizer)?;
            let examples = load_labeled(&args.data)?;
            evaluate_single_label(&model, &tokenizer, &examples, &labels, norm)?
        }
        TaskKind::MultipleChoice => {
            let examples = load_multiple_choice(&args.data)?;
            evaluate_multiple_choice(&model, &tokenizer, &examples, norm)?
        }
    };

    let metadata = RunMetadata::collect(&model.config, fnv1a_file(&args.data)?);
    ensure_dir(&args.out)?;
    let path = args.out.join("report.json");
    write_report(&path, &report, &metadata)?;

    let mut manifest = RunManifest::new("evaluate");
    manifest.add_input("checkpoint", &args.checkpoint);
    manifest.add_input("tokenizer", &args.tokenizer);
    manifest.add_input("data", &args.data);
    if let Some(labels) = &args.labels {
        manifest.add_input("labels", labels);
    }
    manifest
        .config
        .insert("task".into(), format!("{:?}", args.task));
    manifest
        .config
        .insert("norm".into(), format!("{:?}", args.norm));
    manifest.add_artifact(&args.out, "report.json")?;
    manifest.write(&args.out)?;

    println!(
        "evaluate: {} example(s); accuracy {:.4}, micro-F1 {:.4}, macro-F1 {:.4}; report at {}",
        report.n_examples,
        report.accuracy,
        report.micro_f1,
        report.macro_f1,
        path.display()
    );
    Ok(())
}
