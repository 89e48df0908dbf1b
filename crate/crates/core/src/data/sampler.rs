//! Deterministic batch sampling over a tokenized corpus.
//!
//! The token stream is cut into non-overlapping windows of `seq_len + 1`
//! tokens, aligned to window-size multiples (the trailing remainder is
//! dropped). Each epoch visits every window exactly once, in the order of a
//! Fisher–Yates permutation seeded by `seed + epoch`; a single global cursor
//! addresses positions across epochs, so (seed, cursor) fully determines all
//! future batches — the property checkpoint resume relies on.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::shard::read_shard;
use super::{DataError, DatasetIndex};
use crate::trainer::BatchProvider;

/// Load every shard listed in `index_path` (resolved relative to the index
/// file's directory) into one contiguous id vector, verifying each shard
/// against the expected tokenizer fingerprint when given.
pub fn load_dataset(
    index_path: &Path,
    expected_fingerprint: Option<u64>,
) -> Result<Vec<u32>, DataError> {
    let index = DatasetIndex::load(index_path)?;
    let dir = index_path.parent().unwrap_or_else(|| Path::new("."));
    let mut data = Vec::with_capacity(index.total_tokens as usize);
    for (name, count) in &index.shards {
        let path = dir.join(name);
        let ids = read_shard(&path, expected_fingerprint)?;
        if ids.len() as u64 != *count {
            return Err(DataError::Format {
                path,
                message: format!("index says {count} tokens, shard holds {}", ids.len()),
            });
        }
        data.extend(ids);
    }
    Ok(data)
}

/// Cursor-addressed window sampler. See the module docs for the scheme.
#[derive(Debug)]
pub struct Sampler {
    data: Vec<u32>,
    window: usize,
    n_windows: u64,
    seed: u64,
    cursor: u64,
    perm: Vec<u64>,
    perm_epoch: Option<u64>,
}

impl Sampler {
    /// `seq_len` is the model's training sequence length; each sampled row
    /// carries `seq_len + 1` tokens (inputs plus the shifted targets).
    pub fn new(data: Vec<u32>, seq_len: usize, seed: u64) -> Result<Self, DataError> {
        assert!(seq_len > 0, "seq_len must be positive");
        let window = seq_len + 1;
        let n_windows = (data.len() / window) as u64;
        if n_windows == 0 {
            return Err(DataError::TooSmall {
                total_tokens: data.len(),
                window,
            });
        }
        Ok(Self {
            data,
            window,
            n_windows,
            seed,
            cursor: 0,
            perm: Vec::new(),
            perm_epoch: None,
        })
    }

    /// Windows per epoch.
    pub fn window_count(&self) -> u64 {
        self.n_windows
    }

    pub fn total_tokens(&self) -> usize {
        self.data.len()
    }

    /// The window index visited at a cursor position, materializing that
    /// epoch's permutation if it is not the cached one.
    fn window_at(&mut self, cursor: u64) -> u64 {
        let epoch = cursor / self.n_windows;
        if self.perm_epoch != Some(epoch) {
            let mut rng = ChaCha20Rng::seed_from_u64(self.seed.wrapping_add(epoch));
            let mut perm: Vec<u64> = (0..self.n_windows).collect();
            // Fisher–Yates.
            for i in (1..perm.len()).rev() {
                let j = rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            self.perm = perm;
            self.perm_epoch = Some(epoch);
        }
        self.perm[(cursor % self.n_windows) as usize]
    }
}

impl BatchProvider for Sampler {
    fn next_batch(&mut self, batch: usize) -> Vec<u32> {
        let mut out = Vec::with_capacity(batch * self.window);
        for _ in 0..batch {
            let w = self.window_at(self.cursor) as usize;
            out.extend_from_slice(&self.data[w * self.window..(w + 1) * self.window]);
            self.cursor += 1;
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
