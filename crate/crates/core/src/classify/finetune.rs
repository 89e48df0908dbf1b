//! Fine-tuning on rendered classification sequences.
//!
//! The optimizer, loss, and architecture are exactly the pretraining ones;
//! the only things that change are the data (rendered
//! `(text)<|label|>(label)<|endoftext|>` rows) and the padding needed to
//! make variable-length rows rectangular. Padded target positions are
//! excluded from the loss.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::model::Model;
use crate::tensor::Scalar;
use crate::tokenizer::TokenizerModel;
use crate::trainer::{train_loop, BatchProvider, LogRecord, TrainConfig, TrainError, TrainState};

use super::{format_example, ClassifyError, LabeledExample, LabelSet};

/// Serves rendered example rows as rectangular batches.
///
/// Examples are shuffled once per epoch (Fisher–Yates seeded from
/// `seed + epoch`) and consumed through a single global cursor, so a
/// checkpointed cursor value resumes the exact draw sequence. Each batch is
/// padded to the length of its own longest row.
#[derive(Debug)]
pub struct ExampleProvider {
    rows: Vec<Vec<u32>>,
    pad_id: u32,
    seed: u64,
    cursor: u64,
    perm: Vec<usize>,
    perm_epoch: Option<u64>,
}

impl ExampleProvider {
    pub fn new(rows: Vec<Vec<u32>>, pad_id: u32, seed: u64) -> Result<Self, ClassifyError> {
        if rows.is_empty() {
            return Err(ClassifyError::NoExamples);
        }
        debug_assert!(rows.iter().all(|r| r.len() >= 2));
        Ok(Self {
            rows,
            pad_id,
            seed,
            cursor: 0,
            perm: Vec::new(),
            perm_epoch: None,
        })
    }

    pub fn n_examples(&self) -> usize {
        self.rows.len()
    }

    fn ensure_perm(&mut self, epoch: u64) {
        if self.perm_epoch == Some(epoch) {
            return;
        }
        let n = self.rows.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed.wrapping_add(epoch));
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        self.perm = perm;
        self.perm_epoch = Some(epoch);
    }

    fn row_at(&mut self, draw: u64) -> usize {
        let n = self.rows.len() as u64;
        let epoch = draw / n;
        self.ensure_perm(epoch);
        self.perm[(draw % n) as usize]
    }
}

impl BatchProvider for ExampleProvider {
    fn next_batch(&mut self, batch: usize) -> Vec<u32> {
        let indices: Vec<usize> = (0..batch)
            .map(|k| self.row_at(self.cursor + k as u64))
            .collect();
        self.cursor += batch as u64;
        let width = indices
            .iter()
            .map(|&i| self.rows[i].len())
            .max()
            .expect("batch must be non-empty");
        let mut out = Vec::with_capacity(batch * width);
        for &i in &indices {
            out.extend_from_slice(&self.rows[i]);
            out.resize(out.len() + (width - self.rows[i].len()), self.pad_id);
        }
        out
    }

    fn cursor(&self) -> u64 {
        self.cursor
    }

    fn seek(&mut self, cursor: u64) {
        self.cursor = cursor;
    }
}

/// Fine-tune on labeled examples with the stock training loop.
///
/// Validates every label against the candidate set, renders each example
/// once (truncating text from the head where needed), forces the loss to
/// ignore padding, and hands off to [`train_loop`]. `start_cursor` is 0 for
/// a fresh run, or the cursor stored in a mid-fine-tune checkpoint.
#[allow(clippy::too_many_arguments)]
pub fn finetune_classifier<S: Scalar>(
    model: &mut Model<S>,
    state: &mut TrainState<S>,
    tokenizer: &TokenizerModel,
    examples: &[LabeledExample],
    labels: &LabelSet,
    config: &TrainConfig,
    start_cursor: u64,
    on_log: impl FnMut(&LogRecord) -> Result<(), TrainError>,
    on_checkpoint: impl FnMut(&Model<S>, &TrainState<S>, u64) -> Result<(), TrainError>,
) -> Result<(), ClassifyError> {
    if examples.is_empty() {
        return Err(ClassifyError::NoExamples);
    }
    let row_cap = config.seq_len.min(model.config.max_seq_len);
    let mut rows = Vec::with_capacity(examples.len());
    for (index, example) in examples.iter().enumerate() {
        if labels.position(&example.label).is_none() {
            return Err(ClassifyError::UnknownLabel {
                index,
                label: example.label.clone(),
            });
        }
        rows.push(format_example(tokenizer, example, row_cap)?);
    }
    let mut provider = ExampleProvider::new(rows, tokenizer.pad_id(), config.seed)?;
    provider.seek(start_cursor);
    let mut config = config.clone();
    config.pad_id = Some(tokenizer.pad_id());
    train_loop(model, state, &config, &mut provider, on_log, on_checkpoint)?;
    Ok(())
}
