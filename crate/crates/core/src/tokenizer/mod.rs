//! Byte-level BPE tokenizer: training, encode/decode, and the on-disk format.
//!
//! The vocabulary always contains the 256 single-byte tokens, so every input
//! is representable and there is no unknown-token case. Merge rules are
//! learned from a corpus by repeatedly fusing the most frequent adjacent pair
//! within pre-token units. Special tags (`<|label|>`, `<|endoftext|>`,
//! `<|pad|>` by default) sit at the top of the id space, tokenize to exactly
//! one id each, and never participate in merges.

mod codec;
mod io;
mod pretokenize;
mod train;

pub use codec::EncodeCache;
pub use io::{load_tokenizer, save_tokenizer};
pub use pretokenize::pretokenize;
pub use train::train_bpe;

use std::collections::HashMap;

use crate::util::Fnv1a;

/// Number of single-byte base tokens; they always occupy ids `0..256`.
pub const BYTE_TOKENS: usize = 256;

#[derive(Debug, thiserror::Error)]
pub enum TokenizerError {
    #[error("target vocab size {requested} is below the minimum {minimum} (256 byte tokens + {n_tags} special tags)")]
    VocabTooSmall {
        requested: usize,
        minimum: usize,
        n_tags: usize,
    },
    #[error("corpus contains no usable text")]
    EmptyCorpus,
    #[error("special tags are invalid: {0}")]
    InvalidTags(String),
    #[error("token id {id} at position {position} is out of range (vocab size {vocab_size})")]
    IdOutOfRange {
        id: u32,
        position: usize,
        vocab_size: usize,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The three protected tag strings a tokenizer reserves single ids for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecialTagSet {
    /// Joins text and label in classifier sequences.
    pub label_tag: String,
    /// Document/sequence terminator.
    pub end_tag: String,
    /// Padding inside batches; ignored by the loss.
    pub pad_tag: String,
}

impl Default for SpecialTagSet {
    fn default() -> Self {
        Self {
            label_tag: "<|label|>".to_string(),
            end_tag: "<|endoftext|>".to_string(),
            pad_tag: "<|pad|>".to_string(),
        }
    }
}

impl SpecialTagSet {
    /// Tags in their fixed id order: label, end, pad.
    pub fn ordered(&self) -> [&str; 3] {
        [&self.label_tag, &self.end_tag, &self.pad_tag]
    }

    pub fn validate(&self) -> Result<(), TokenizerError> {
        let tags = self.ordered();
        for tag in tags {
            if tag.is_empty() {
                return Err(TokenizerError::InvalidTags("tags must be non-empty".into()));
            }
            if tag.contains('\t') || tag.contains('\n') || tag.contains('\r') {
                return Err(TokenizerError::InvalidTags(format!(
                    "tag {tag:?} contains tab or newline"
                )));
            }
        }
        for i in 0..tags.len() {
            for j in (i + 1)..tags.len() {
                if tags[i] == tags[j] {
                    return Err(TokenizerError::InvalidTags(format!(
                        "tag {:?} appears twice",
                        tags[i]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A trained byte-level BPE tokenizer.
///
/// Ids are dense: bytes at `0..256`, one merged token per merge rule at
/// `256..256+merges`, special tags at the top. Immutable once built; encode
/// and decode are pure and safe to call from many threads.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizerModel {
    /// Token id → byte sequence, dense over `0..vocab_size`.
    vocab: Vec<Vec<u8>>,
    /// Ordered merge rules; rule `r` produced token `256 + r`.
    merges: Vec<(u32, u32)>,
    /// Pair → merge rank, for encoding.
    merge_ranks: HashMap<(u32, u32), u32>,
    /// Tag strings in id order with their ids.
    special_tokens: Vec<(String, u32)>,
    tags: SpecialTagSet,
}

impl TokenizerModel {
    /// Assemble a model from parts, checking the structural invariants.
    pub(crate) fn from_parts(
        vocab: Vec<Vec<u8>>,
        merges: Vec<(u32, u32)>,
        tags: SpecialTagSet,
    ) -> Result<Self, TokenizerError> {
        tags.validate()?;
        let n_tags = tags.ordered().len();
        let expected = BYTE_TOKENS + merges.len() + n_tags;
        if vocab.len() != expected {
            return Err(TokenizerError::InvalidTags(format!(
                "vocab has {} entries, expected {} (256 bytes + {} merges + {} tags)",
                vocab.len(),
                expected,
                merges.len(),
                n_tags
            )));
        }
        for (i, bytes) in vocab.iter().take(BYTE_TOKENS).enumerate() {
            if bytes.len() != 1 || bytes[0] as usize != i {
                return Err(TokenizerError::InvalidTags(format!(
                    "token {i} must be the single byte {i}"
                )));
            }
        }
        let mut merge_ranks = HashMap::with_capacity(merges.len());
        for (rank, &(left, right)) in merges.iter().enumerate() {
            let id = (BYTE_TOKENS + rank) as u32;
            if left >= id || right >= id {
                return Err(TokenizerError::InvalidTags(format!(
                    "merge {rank} references token {} before it exists",
                    left.max(right)
                )));
            }
            let mut cat = vocab[left as usize].clone();
            cat.extend_from_slice(&vocab[right as usize]);
            if cat != vocab[id as usize] {
                return Err(TokenizerError::InvalidTags(format!(
                    "token {id} does not equal the concatenation of merge rule {rank}"
                )));
            }
            if merge_ranks.insert((left, right), rank as u32).is_some() {
                return Err(TokenizerError::InvalidTags(format!(
                    "merge rule ({left}, {right}) appears twice"
                )));
            }
        }
        let first_special = BYTE_TOKENS + merges.len();
        let special_tokens: Vec<(String, u32)> = tags
            .ordered()
            .iter()
            .enumerate()
            .map(|(i, tag)| (tag.to_string(), (first_special + i) as u32))
            .collect();
        for (tag, id) in &special_tokens {
            if vocab[*id as usize] != tag.as_bytes() {
                return Err(TokenizerError::InvalidTags(format!(
                    "special tag {tag:?} does not occupy id {id}"
                )));
            }
        }
        Ok(Self {
            vocab,
            merges,
            merge_ranks,
            special_tokens,
            tags,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Byte sequence of a token id, if in range.
    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        self.vocab.get(id as usize).map(Vec::as_slice)
    }

    /// Ordered merge rules as (left, right) token-id pairs.
    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    /// Tag strings with their ids, in id order (label, end, pad).
    pub fn special_tokens(&self) -> &[(String, u32)] {
        &self.special_tokens
    }

    pub fn tags(&self) -> &SpecialTagSet {
        &self.tags
    }

    pub fn label_id(&self) -> u32 {
        self.special_tokens[0].1
    }

    pub fn end_id(&self) -> u32 {
        self.special_tokens[1].1
    }

    pub fn pad_id(&self) -> u32 {
        self.special_tokens[2].1
    }

    pub(crate) fn merge_rank(&self, pair: (u32, u32)) -> Option<u32> {
        self.merge_ranks.get(&pair).copied()
    }

    /// Stable 64-bit digest of the full model, recorded in token shards and
    /// checkpoints to guard against tokenizer mismatches.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv1a::new();
        h.update(b"lexforge-tokenizer-v1");
        for bytes in &self.vocab {
            h.update(&(bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        }
        h.update(b"merges");
        for &(l, r) in &self.merges {
            h.update(&l.to_le_bytes());
            h.update(&r.to_le_bytes());
        }
        h.update(b"special");
        for (tag, id) in &self.special_tokens {
            h.update(&(tag.len() as u64).to_le_bytes());
            h.update(tag.as_bytes());
            h.update(&id.to_le_bytes());
        }
        h.finish()
    }
}
