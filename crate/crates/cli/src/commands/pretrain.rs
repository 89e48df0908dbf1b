//! `pretrain`: next-token training over ingested shards, resumable.

use std::path::PathBuf;

use clap::Args;
use lexforge_core::config::Settings;
use lexforge_core::data::{load_dataset, Sampler};
use lexforge_core::model::Model;
use lexforge_core::trainer::{train_loop, BatchProvider, TrainState};

use crate::commands::{
    apply_set_flags, ensure_dir, fmt_loss, load_checkpoint_for, load_tokenizer_dir,
    save_step_checkpoint, training_artifacts, LossLog,
};
use crate::fail::{usage, CliResult};
use crate::manifest::RunManifest;

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Training config file (key = value lines). Flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset index (index.tsv produced by ingest).
    #[arg(long)]
    pub data: PathBuf,
    /// Tokenizer directory; its vocabulary sizes the embedding.
    #[arg(long)]
    pub tokenizer: PathBuf,
    /// Output directory for checkpoints and loss.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Total optimizer steps (overrides config file).
    #[arg(long)]
    pub steps: Option<u64>,
    /// Seed for init, sampling, and the whole run (overrides config file).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Steps between checkpoints (0 = only at the end).
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Individual overrides, e.g. --set lr_max=3e-4 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Resume from a checkpoint file. The run continues under the
    /// checkpoint's exact configuration, so config-shaping flags are
    /// rejected alongside it.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

pub fn run(args: &PretrainArgs) -> CliResult {
    let tokenizer = load_tokenizer_dir(&args.tokenizer)?;
    let fingerprint = tokenizer.fingerprint();

    let (mut model, mut state, train_config, start_cursor) = match &args.resume {
        Some(ckpt) => {
            // A resumed schedule must replay bit-for-bit; anything that can
            // change the math is pinned to the checkpoint.
            if args.config.is_some() || !args.set.is_empty() {
                return Err(usage("--resume continues under the checkpoint's configuration; \
                     --config/--set cannot be combined with it"));
            }
            if args.steps.is_some() || args.seed.is_some() {
                return Err(usage("--steps/--seed are fixed by the checkpoint; \
                     they cannot be combined with --resume"));
            }
            let contents = load_checkpoint_for(ckpt, &tokenizer)?;
            let mut train_config = contents.train_config;
            if let Some(every) = args.checkpoint_every {
                // Cadence only controls how often state is flushed to disk;
                // it never enters the arithmetic, so overriding it is safe.
                train_config.checkpoint_every = every;
            }
            (
                contents.model,
                contents.state,
                train_config,
                contents.data_cursor,
            )
        }
        None => {
            let mut settings = Settings::default();
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
            // The embedding must match the vocabulary it will be fed, so the
            // tokenizer - not the config file - decides the vocab size.
            settings.model.vocab_size = tokenizer.vocab_size();
            settings.validate()?;
            let model = Model::new(settings.model.clone(), settings.train.seed);
            let state = TrainState::fresh(&model);
            (model, state, settings.train, 0u64)
        }
    };

    if state.step >= train_config.total_steps {
        return Err(usage(format!(
            "checkpoint is already at step {} of {}; nothing to train",
            state.step, train_config.total_steps
        )));
    }

    let data = load_dataset(&args.data, Some(fingerprint))?;
    let total_tokens = data.len();
    let mut sampler = Sampler::new(data, train_config.seq_len, train_config.seed)?;
    sampler.seek(start_cursor);

    ensure_dir(&args.out)?;
    let mut log = LossLog::open(args.out.join("loss.csv"))?;
    let mut last: Option<(u64, f64, f64)> = None;
    train_loop(
        &mut model,
        &mut state,
        &train_config,
        &mut sampler,
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

    let mut manifest = RunManifest::new("pretrain");
    let echo = Settings {
        model: model.config.clone(),
        train: train_config.clone(),
    };
    manifest.set_config_text(&echo.to_kv_text());
    manifest.add_input("data", &args.data);
    manifest.add_input("tokenizer", &args.tokenizer);
    if let Some(ckpt) = &args.resume {
        manifest.add_input("resume", ckpt);
    }
    manifest.seed = Some(train_config.seed);
    for name in training_artifacts(&args.out)? {
        manifest.add_artifact(&args.out, &name)?;
    }
    manifest.write(&args.out)?;

    if let Some((step, loss, ema)) = last {
        println!(
            "pretrain: step {step}/{} loss {} (ema {}) over {} dataset tokens; \
             {} tokens seen; artifacts under {}",
            train_config.total_steps,
            fmt_loss(loss),
            fmt_loss(ema),
            total_tokens,
            state.tokens_seen,
            args.out.display()
        );
    }
    Ok(())
}
