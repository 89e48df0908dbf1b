//! BPE training: learn merge rules from a corpus by repeated pair fusion.
//!
//! Pair statistics are kept incrementally: each merge touches only the words
//! that actually contain the merged pair, so training cost scales with the
//! corpus vocabulary rather than merges × corpus size. Selection order is a
//! total order (count, then byte content, then ids), which makes training
//! deterministic regardless of hash-map iteration order.

use std::collections::{HashMap, HashSet};

use super::{SpecialTagSet, TokenizerError, TokenizerModel, BYTE_TOKENS};
use crate::tokenizer::pretokenize::pretokenize;

/// Train a byte-level BPE tokenizer.
///
/// `vocab_size` is the target total size: 256 byte tokens, learned merges,
/// and the special tags on top. If the corpus runs out of pairs that occur
/// at least twice before the target is reached, training stops early with a
/// warning and the model ends up smaller than requested.
pub fn train_bpe<'a, I>(
    docs: I,
    vocab_size: usize,
    tags: SpecialTagSet,
) -> Result<TokenizerModel, TokenizerError>
where
    I: IntoIterator<Item = &'a str>,
{
    tags.validate()?;
    let n_tags = tags.ordered().len();
    let minimum = BYTE_TOKENS + n_tags;
    if vocab_size < minimum {
        return Err(TokenizerError::VocabTooSmall {
            requested: vocab_size,
            minimum,
            n_tags,
        });
    }
    let target_merges = vocab_size - minimum;

    // Count pre-token units across the corpus.
    let mut unit_counts: HashMap<String, u64> = HashMap::new();
    for doc in docs {
        for unit in pretokenize(doc) {
            if let Some(c) = unit_counts.get_mut(unit) {
                *c += 1;
            } else {
                unit_counts.insert(unit.to_string(), 1);
            }
        }
    }
    if unit_counts.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }

    // Fix a deterministic word order before building mutable state.
    let mut word_list: Vec<(String, u64)> = unit_counts.into_iter().collect();
    word_list.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    let counts: Vec<u64> = word_list.iter().map(|(_, c)| *c).collect();
    let mut words: Vec<Vec<u32>> = word_list
        .iter()
        .map(|(w, _)| w.bytes().map(u32::from).collect())
        .collect();

    let mut vocab: Vec<Vec<u8>> = (0u16..256).map(|b| vec![b as u8]).collect();
    let mut merges: Vec<(u32, u32)> = Vec::with_capacity(target_merges);

    // pair → total occurrence count, and pair → indices of words containing it.
    let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
    let mut pair_words: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
    for (idx, sym) in words.iter().enumerate() {
        for win in sym.windows(2) {
            let pair = (win[0], win[1]);
            *pair_counts.entry(pair).or_insert(0) += counts[idx];
            pair_words.entry(pair).or_default().insert(idx);
        }
    }

    while merges.len() < target_merges {
        let Some((pair, count)) = select_pair(&pair_counts, &vocab) else {
            break;
        };
        if count < 2 {
            break;
        }
        let new_id = vocab.len() as u32;
        let mut fused = vocab[pair.0 as usize].clone();
        fused.extend_from_slice(&vocab[pair.1 as usize]);
        vocab.push(fused);
        merges.push(pair);

        let affected: Vec<usize> = pair_words
            .remove(&pair)
            .map(|s| s.into_iter().collect())
            .unwrap_or_default();
        for idx in affected {
            let old = std::mem::take(&mut words[idx]);
            let new = merge_word(&old, pair, new_id);
            update_pair_stats(&mut pair_counts, &mut pair_words, idx, counts[idx], &old, &new);
            words[idx] = new;
        }
        pair_counts.remove(&pair);
    }

    if merges.len() < target_merges {
        log::warn!(
            "vocab target {} unreachable: no remaining pair occurs twice after {} merges; \
             final vocab size is {}",
            vocab_size,
            merges.len(),
            BYTE_TOKENS + merges.len() + n_tags
        );
    }

    for tag in tags.ordered() {
        vocab.push(tag.as_bytes().to_vec());
    }
    TokenizerModel::from_parts(vocab, merges, tags)
}

/// Pick the next pair to merge: highest count, then lexicographically
/// smallest fused byte content, then smallest left-token bytes, then smallest
/// ids. The key is a total order, so the scan is deterministic even though
/// the map iterates in arbitrary order.
fn select_pair(
    pair_counts: &HashMap<(u32, u32), u64>,
    vocab: &[Vec<u8>],
) -> Option<((u32, u32), u64)> {
    let mut best: Option<((u32, u32), u64)> = None;
    for (&pair, &count) in pair_counts {
        let better = match best {
            None => true,
            Some((incumbent, inc_count)) => {
                use std::cmp::Ordering::*;
                match count.cmp(&inc_count) {
                    Greater => true,
                    Less => false,
                    Equal => {
                        let cat = |p: (u32, u32)| {
                            vocab[p.0 as usize]
                                .iter()
                                .chain(vocab[p.1 as usize].iter())
                        };
                        cat(pair)
                            .cmp(cat(incumbent))
                            .then_with(|| vocab[pair.0 as usize].cmp(&vocab[incumbent.0 as usize]))
                            .then_with(|| pair.0.cmp(&incumbent.0))
                            .then_with(|| pair.1.cmp(&incumbent.1))
                            .is_lt()
                    }
                }
            }
        };
        if better {
            best = Some((pair, count));
        }
    }
    best
}

/// Rewrite one symbol sequence, fusing every non-overlapping occurrence of
/// `pair` left to right into `new_id`.
pub(crate) fn merge_word(sym: &[u32], pair: (u32, u32), new_id: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(sym.len());
    let mut i = 0;
    while i < sym.len() {
        if i + 1 < sym.len() && sym[i] == pair.0 && sym[i + 1] == pair.1 {
            out.push(new_id);
            i += 2;
        } else {
            out.push(sym[i]);
            i += 1;
        }
    }
    out
}

/// Apply the pair-count and pair-membership diff for one rewritten word.
fn update_pair_stats(
    pair_counts: &mut HashMap<(u32, u32), u64>,
    pair_words: &mut HashMap<(u32, u32), HashSet<usize>>,
    idx: usize,
    word_count: u64,
    old: &[u32],
    new: &[u32],
) {
    for win in old.windows(2) {
        let pair = (win[0], win[1]);
        if let Some(c) = pair_counts.get_mut(&pair) {
            *c -= word_count;
            if *c == 0 {
                pair_counts.remove(&pair);
            }
        }
        if let Some(set) = pair_words.get_mut(&pair) {
            set.remove(&idx);
            if set.is_empty() {
                pair_words.remove(&pair);
            }
        }
    }
    for win in new.windows(2) {
        let pair = (win[0], win[1]);
        *pair_counts.entry(pair).or_insert(0) += word_count;
        pair_words.entry(pair).or_default().insert(idx);
    }
}
