//! Subcommand implementations.

pub mod evaluate;
pub mod finetune;
pub mod ingest;
pub mod loss_curve;
pub mod predict;
pub mod pretrain;
pub mod train_tokenizer;

use std::io::Write;
use std::path::{Path, PathBuf};

use lexforge_core::config::Settings;
use lexforge_core::model::Model;
use lexforge_core::tokenizer::{load_tokenizer, TokenizerModel};
use lexforge_core::trainer::{load_checkpoint, CheckpointContents, LogRecord, TrainState};

use crate::fail::{usage, CliResult, Failure};

/// Which classification shape `predict`/`evaluate` operate on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TaskKind {
    /// One label per example, drawn from a label manifest.
    SingleLabel,
    /// Five-choice questions, scored choice-by-choice as True/False.
    MultipleChoice,
}

/// How candidate log-probabilities are normalized before comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum NormKind {
    /// Mean log-probability per candidate token (length-neutral).
    Mean,
    /// Raw summed log-probability (favors short candidates).
    Sum,
}

impl NormKind {
    pub fn to_score_norm(self) -> lexforge_core::classify::ScoreNorm {
        match self {
            NormKind::Mean => lexforge_core::classify::ScoreNorm::MeanLogProb,
            NormKind::Sum => lexforge_core::classify::ScoreNorm::SumLogProb,
        }
    }
}

/// Number format used throughout CLI summaries.
pub fn fmt_loss(v: f64) -> String {
    format!("{v:.4}")
}

pub fn ensure_dir(path: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(path)?;
    Ok(())
}

pub fn load_tokenizer_dir(path: &Path) -> Result<TokenizerModel, Failure> {
    load_tokenizer(path).map_err(Failure::from)
}

/// Load a checkpoint, insisting that it was written with the given
/// tokenizer (embedding rows are meaningless under any other vocabulary).
pub fn load_checkpoint_for(
    path: &Path,
    tokenizer: &TokenizerModel,
) -> Result<CheckpointContents<f32>, Failure> {
    load_checkpoint::<f32>(path, Some(tokenizer.fingerprint())).map_err(Failure::from)
}

/// Apply `--set key=value` pairs onto settings.
pub fn apply_set_flags(settings: &mut Settings, pairs: &[String]) -> CliResult {
    for pair in pairs {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects key=value, got {pair:?}")))?;
        settings.apply(key.trim(), value.trim())?;
    }
    Ok(())
}

/// Append-mode loss log: writes the CSV header only when starting a new
/// file, so resumed runs keep one continuous log.
pub struct LossLog {
    file: std::io::BufWriter<std::fs::File>,
    pub path: PathBuf,
}

impl LossLog {
    pub fn open(path: PathBuf) -> Result<Self, Failure> {
        let fresh = !path.exists();
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)?;
        let mut log = Self {
            file: std::io::BufWriter::new(file),
            path,
        };
        if fresh {
            writeln!(log.file, "{}", LogRecord::CSV_HEADER)
                .map_err(|e| Failure::Runtime(e.to_string()))?;
        }
        Ok(log)
    }

    pub fn append(&mut self, record: &LogRecord) -> std::io::Result<()> {
        writeln!(self.file, "{}", record.to_csv())?;
        self.file.flush()
    }
}

/// Save a checkpoint under `dir` as `ckpt-step{N}.lexf` and refresh the
/// `latest.lexf` convenience copy. Returns the step-named file.
pub fn save_step_checkpoint(
    dir: &Path,
    model: &Model<f32>,
    state: &TrainState<f32>,
    train_config: &lexforge_core::trainer::TrainConfig,
    data_cursor: u64,
    tokenizer_fingerprint: u64,
) -> Result<PathBuf, lexforge_core::trainer::TrainError> {
    let name = format!("ckpt-step{:07}.lexf", state.step);
    let path = dir.join(&name);
    lexforge_core::trainer::save_checkpoint(
        &path,
        model,
        state,
        train_config,
        data_cursor,
        tokenizer_fingerprint,
    )?;
    std::fs::copy(&path, dir.join("latest.lexf")).map_err(|e| {
        lexforge_core::trainer::TrainError::Checkpoint {
            path: dir.join("latest.lexf").display().to_string(),
            message: e.to_string(),
        }
    })?;
    Ok(path)
}

/// Names of every `.lexf` checkpoint and `.csv` log currently in `dir`,
/// sorted — the artifact set a training run digests into its manifest.
pub fn training_artifacts(dir: &Path) -> Result<Vec<String>, Failure> {
    let mut names: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|entry| entry.ok())
        .filter_map(|entry| entry.file_name().into_string().ok())
        .filter(|name| name.ends_with(".lexf") || name.ends_with(".csv"))
        .collect();
    names.sort();
    Ok(names)
}
