//! `finetune`: adapt a pretrained checkpoint into a label classifier.
//!
//! Fine-tuning always starts a fresh schedule and optimizer over the
//! checkpoint's weights; there is no `--resume` here because the short runs
//! this command exists for are cheaper to restart than to splice.

use std::path::PathBuf;

use clap::Args;
use lexforge_core::classify::{finetune_classifier, load_labeled, load_labels, LabelSet};
use lexforge_core::config::Settings;
use lexforge_core::trainer::TrainState;

use crate::commands::{
    apply_set_flags, ensure_dir, fmt_loss, load_checkpoint_for, load_tokenizer_dir,
    save_step_checkpoint, training_artifacts, LossLog,
};
use crate::fail::CliResult;
use crate::manifest::RunManifest;

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Pretrained checkpoint to start from.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Tokenizer directory the checkpoint was trained with.
    #[arg(long)]
    pub tokenizer: PathBuf,
    /// Training examples: one {"text", "label"} JSON object per line.
    #[arg(long)]
    pub train: PathBuf,
    /// Label manifest: one label per line, order fixes class indices.
    #[arg(long)]
    pub labels: PathBuf,
    /// Output directory for checkpoints and loss.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Training config file (key = value lines). Flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Individual overrides, e.g. --set lr_max=1e-3 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Total optimizer steps (overrides config file).
    #[arg(long)]
    pub steps: Option<u64>,
    /// Seed for example shuffling (overrides config file).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Steps between checkpoints (0 = only at the end).
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
}

pub fn run(args: &FinetuneArgs) -> CliResult {
    let tokenizer = load_tokenizer_dir(&args.tokenizer)?;
    let fingerprint = tokenizer.fingerprint();
    let contents = load_checkpoint_for(&args.checkpoint, &tokenizer)?;
    let mut model = contents.model;

    let mut settings = Settings {
        // The model half is fixed by the checkpoint; holding it in the
        // settings echoes it into validation and the manifest.
        model: model.config.clone(),
        ..Settings::default()
    };
    if let Some(path) = &args.config {
        settings.apply_file(path)?;
    }
    apply_set_flags(&mut settings, &args.set)?;
    if let Some(steps) = args.steps {
        settings.train.total_steps = steps;
    }
    if let Some(seed) = args.seed {
        settings.train.seed = seed;
    }
    if let Some(every) = args.checkpoint_every {
        settings.train.checkpoint_every = every;
    }
    settings.model = model.config.clone();
    settings.validate()?;
    let train_config = settings.train.clone();

    let examples = load_labeled(&args.train)?;
    let labels = LabelSet::new(load_labels(&args.labels)?, &tokenizer)?;

    let mut state = TrainState::fresh(&model);
    ensure_dir(&args.out)?;
    let mut log = LossLog::open(args.out.join("loss.csv"))?;
    let mut last: Option<(u64, f64, f64)> = None;
    finetune_classifier(
        &mut model,
        &mut state,
        &tokenizer,
        &examples,
        &labels,
        &train_config,
        0,
        |record| {
            last = Some((record.step, record.loss, record.ema_loss));
            log.append(record).map_err(|e| {
                lexforge_core::trainer::TrainError::Checkpoint {
                    path: log.path.display().to_string(),
                    message: e.to_string(),
                }
            })
        },
        |model, state, cursor| {
            save_step_checkpoint(&args.out, model, state, &train_config, cursor, fingerprint)
                .map(|_| ())
        },
    )?;

    let mut manifest = RunManifest::new("finetune");
    let echo = Settings {
        model: model.config.clone(),
        train: train_config.clone(),
    };
    manifest.set_config_text(&echo.to_kv_text());
    manifest.add_input("checkpoint", &args.checkpoint);
    manifest.add_input("tokenizer", &args.tokenizer);
    manifest.add_input("train", &args.train);
    manifest.add_input("labels", &args.labels);
    manifest.seed = Some(train_config.seed);
    for name in training_artifacts(&args.out)? {
        manifest.add_artifact(&args.out, &name)?;
    }
    manifest.write(&args.out)?;

    if let Some((step, loss, ema)) = last {
        println!(
            "finetune: step {step}/{} loss {} (ema {}) on {} examples x {} labels; \
             artifacts under {}",
            train_config.total_steps,
            fmt_loss(loss),
            fmt_loss(ema),
            examples.len(),
            labels.len(),
            args.out.display()
        );
    }
    Ok(())
}
