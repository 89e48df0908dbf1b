//! Sampling and sequence scoring on top of the forward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{KvCache, Model};
use crate::tensor::{Scalar, Tape, TensorError};

/// How [`Model::generate`] picks each next token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    /// Always the highest-logit token (ties resolve to the lowest id).
    Greedy,
    /// Softmax sampling at the given temperature, driven by the seed.
    Temperature { temperature: f64, seed: u64 },
}

impl<S: Scalar> Model<S> {
    /// Continue `prompt` for up to `max_new` tokens, decoding incrementally
    /// through a key/value cache. Returns the full sequence (prompt plus
    /// generated tokens). Stops early when `stop` is produced (the stop
    /// token is kept, marking the end) or when the context window fills.
    pub fn generate(
        &self,
        prompt: &[u32],
        max_new: usize,
        sampling: Sampling,
        stop: Option<u32>,
    ) -> Result<Vec<u32>, TensorError> {
        assert!(!prompt.is_empty(), "generate: prompt must be non-empty");
        assert!(
            prompt.len() <= self.config.max_seq_len,
            "generate: prompt longer than max_seq_len"
        );
        let mut rng = match sampling {
            Sampling::Greedy => None,
            Sampling::Temperature { seed, .. } => Some(ChaCha20Rng::seed_from_u64(seed)),
        };
        let vocab = self.config.vocab_size;
        let mut ids = prompt.to_vec();
        let mut cache = KvCache::new(self.config.n_layers);
        let mut feed: Vec<u32> = prompt.to_vec();
        for _ in 0..max_new {
            // The token produced this step lands at index cache+feed, so the
            // sequence grows to cache+feed+1; stop while that still fits.
            if cache.len() + feed.len() >= self.config.max_seq_len {
                break;
            }
            let tape = Tape::new();
            let bound = self.bind(&tape);
            let logits = self.forward(&tape, &bound, &feed, 1, Some(&mut cache));
            tape.health()?;
            let value = tape.value(logits);
            let last = &value.data()[(feed.len() - 1) * vocab..];
            let next = match (&sampling, rng.as_mut()) {
                (Sampling::Greedy, _) => argmax(last),
                (Sampling::Temperature { temperature, .. }, Some(rng)) => {
                    sample_softmax(last, *temperature, rng)
                }
                _ => unreachable!(),
            };
            ids.push(next);
            if Some(next) == stop {
                break;
            }
            feed = vec![next];
        }
        Ok(ids)
    }

    /// Sum of log-probabilities of `ids[start..]` given everything before
    /// each position: `Σ log p(ids[j] | ids[..j])` for `j ≥ start`.
    /// `start` must be at least 1 (the first token has no context to be
    /// predicted from). Forward-only; accumulates in f64.
    pub fn continuation_log_prob(&self, ids: &[u32], start: usize) -> Result<f64, TensorError> {
        assert!(
            start >= 1 && start < ids.len(),
            "continuation_log_prob: start {start} out of range for {} tokens",
            ids.len()
        );
        let tape = Tape::new();
        let bound = self.bind(&tape);
        let logits = self.forward(&tape, &bound, ids, 1, None);
        tape.health()?;
        let value = tape.value(logits);
        let vocab = self.config.vocab_size;
        let mut total = 0.0f64;
        for (j, &id) in ids.iter().enumerate().skip(start) {
            let row = &value.data()[(j - 1) * vocab..j * vocab];
            total += log_softmax_at(row, id as usize);
        }
        Ok(total)
    }
}

fn argmax<S: Scalar>(row: &[S]) -> u32 {
    let mut best = 0usize;
    for (i, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = i;
        }
    }
    best as u32
}

/// log softmax(row)[target], max-subtracted, in f64.
fn log_softmax_at<S: Scalar>(row: &[S], target: usize) -> f64 {
    let mut max = row[0];
    for &x in &row[1..] {
        max = max.maximum(x);
    }
    let mut sum = 0.0f64;
    for &x in row {
        sum += (x - max).to_f64().exp();
    }
    (row[target] - max).to_f64() - sum.ln()
}

fn sample_softmax<S: Scalar>(row: &[S], temperature: f64, rng: &mut ChaCha20Rng) -> u32 {
    assert!(
        temperature.is_finite() && temperature > 0.0,
        "temperature must be positive; use Sampling::Greedy for argmax"
    );
    let mut max = row[0];
    for &x in &row[1..] {
        max = max.maximum(x);
    }
    let weights: Vec<f64> = row
        .iter()
        .map(|&x| ((x - max).to_f64() / temperature).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut r = rng.gen_range(0.0..1.0) * total;
    for (i, &w) in weights.iter().enumerate() {
        r -= w;
        if r <= 0.0 {
            return i as u32;
        }
    }
    (row.len() - 1) as u32
}
