//! Encoding and decoding against a trained tokenizer.
//!
//! Encoding walks three layers: special tags are split out first (earliest
//! occurrence wins, longest tag at a tie), the remaining text is cut into
//! pre-token units, and each unit is fused bottom-up by applying merge rules
//! in rank order. Because the rule application order matches training, a
//! corpus word always encodes to the same symbols training left it with.

use std::collections::HashMap;

use super::{TokenizerError, TokenizerModel};
use crate::tokenizer::pretokenize::pretokenize;
use crate::tokenizer::train::merge_word;

/// Memoizes the merge loop per pre-token unit. Natural-language text reuses
/// a small set of units heavily, so ingestion and classifier scoring keep one
/// of these alive across calls.
#[derive(Debug, Default)]
pub struct EncodeCache {
    map: HashMap<Vec<u8>, Vec<u32>>,
}

impl EncodeCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// One piece of the input after special-tag splitting.
enum Segment<'a> {
    /// Ordinary bytes to run through pre-tokenization and merges.
    Text(&'a [u8]),
    /// A special tag, already resolved to its id.
    Tag(u32),
}

impl TokenizerModel {
    /// Encode text to token ids. Special tags in the input become their
    /// reserved single ids; everything else goes through BPE.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut cache = EncodeCache::new();
        self.encode_with_cache(text, &mut cache)
    }

    /// [`encode`](Self::encode) with a caller-owned unit cache.
    pub fn encode_with_cache(&self, text: &str, cache: &mut EncodeCache) -> Vec<u32> {
        self.encode_bytes_with_cache(text.as_bytes(), cache)
    }

    /// Encode raw bytes. Maximal valid UTF-8 chunks take the normal path;
    /// invalid runs become standalone units (merge rules still apply inside
    /// them), so arbitrary binary round-trips exactly.
    pub fn encode_bytes(&self, bytes: &[u8]) -> Vec<u32> {
        let mut cache = EncodeCache::new();
        self.encode_bytes_with_cache(bytes, &mut cache)
    }

    pub fn encode_bytes_with_cache(&self, bytes: &[u8], cache: &mut EncodeCache) -> Vec<u32> {
        let mut out = Vec::new();
        let mut rest = bytes;
        loop {
            match std::str::from_utf8(rest) {
                Ok(text) => {
                    self.encode_str_inner(text, cache, &mut out);
                    break;
                }
                Err(e) => {
                    let valid = e.valid_up_to();
                    if valid > 0 {
                        // Safety of unwrap: from_utf8 reported this prefix valid.
                        let text = std::str::from_utf8(&rest[..valid]).unwrap();
                        self.encode_str_inner(text, cache, &mut out);
                    }
                    let bad_len = e.error_len().unwrap_or(rest.len() - valid);
                    self.encode_unit(&rest[valid..valid + bad_len], cache, &mut out);
                    rest = &rest[valid + bad_len..];
                    if rest.is_empty() {
                        break;
                    }
                }
            }
        }
        out
    }

    /// Encode one valid-UTF-8 stretch: split tags, pre-tokenize, merge.
    fn encode_str_inner(&self, text: &str, cache: &mut EncodeCache, out: &mut Vec<u32>) {
        for segment in self.split_specials(text) {
            match segment {
                Segment::Tag(id) => out.push(id),
                Segment::Text(bytes) => {
                    // Safety of unwrap: segments are cut at tag boundaries,
                    // which are valid char boundaries within valid UTF-8.
                    let piece = std::str::from_utf8(bytes).unwrap();
                    for unit in pretokenize(piece) {
                        self.encode_unit(unit.as_bytes(), cache, out);
                    }
                }
            }
        }
    }

    /// Cut `text` at every special-tag occurrence. Scanning picks the
    /// earliest match; if two tags match at the same position the longer one
    /// wins, so a tag that is a prefix of another never shadows it.
    fn split_specials<'a>(&self, text: &'a str) -> Vec<Segment<'a>> {
        let bytes = text.as_bytes();
        let mut segments = Vec::new();
        let mut start = 0;
        let mut i = 0;
        while i < bytes.len() {
            let mut hit: Option<(usize, u32)> = None;
            for (tag, id) in self.special_tokens() {
                let t = tag.as_bytes();
                if bytes[i..].starts_with(t) {
                    match hit {
                        Some((len, _)) if len >= t.len() => {}
                        _ => hit = Some((t.len(), *id)),
                    }
                }
            }
            if let Some((len, id)) = hit {
                if start < i {
                    segments.push(Segment::Text(&bytes[start..i]));
                }
                segments.push(Segment::Tag(id));
                i += len;
                start = i;
            } else {
                i += 1;
            }
        }
        if start < bytes.len() {
            segments.push(Segment::Text(&bytes[start..]));
        }
        segments
    }

    /// Run the merge loop on one unit, through the cache.
    fn encode_unit(&self, unit: &[u8], cache: &mut EncodeCache, out: &mut Vec<u32>) {
        if let Some(ids) = cache.map.get(unit) {
            out.extend_from_slice(ids);
            return;
        }
        let ids = self.bpe_word(unit);
        out.extend_from_slice(&ids);
        cache.map.insert(unit.to_vec(), ids);
    }

    /// Fuse one unit bottom-up: repeatedly find the lowest-rank pair present
    /// and replace all its occurrences, until no rule applies. Applying rules
    /// in rank order reproduces the segmentation training arrived at.
    fn bpe_word(&self, unit: &[u8]) -> Vec<u32> {
        let mut sym: Vec<u32> = unit.iter().map(|&b| u32::from(b)).collect();
        while sym.len() > 1 {
            let mut best: Option<(u32, (u32, u32))> = None;
            for win in sym.windows(2) {
                let pair = (win[0], win[1]);
                if let Some(rank) = self.merge_rank(pair) {
                    if best.is_none_or(|(r, _)| rank < r) {
                        best = Some((rank, pair));
                    }
                }
            }
            let Some((rank, pair)) = best else { break };
            sym = merge_word(&sym, pair, 256 + rank);
        }
        sym
    }

    /// Decode ids back to the exact byte sequence they encode.
    pub fn decode_bytes(&self, ids: &[u32]) -> Result<Vec<u8>, TokenizerError> {
        let mut out = Vec::new();
        for (position, &id) in ids.iter().enumerate() {
            let bytes = self
                .token_bytes(id)
                .ok_or(TokenizerError::IdOutOfRange {
                    id,
                    position,
                    vocab_size: self.vocab_size(),
                })?;
            out.extend_from_slice(bytes);
        }
        Ok(out)
    }

    /// Decode ids to display text. Token boundaries need not align with
    /// UTF-8 boundaries, so this decodes bytes first and replaces any invalid
    /// sequences with U+FFFD. Use [`decode_bytes`](Self::decode_bytes) when
    /// exact bytes matter.
    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let bytes = self.decode_bytes(ids)?;
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{train_bpe, SpecialTagSet};

    fn small_model() -> TokenizerModel {
        train_bpe(
            [
                "the quick brown fox jumps over the lazy dog",
                "the dog sleeps while the fox watches the hen",
                "pack my box with five dozen liquor jugs",
            ],
            256 + 24 + 3,
            SpecialTagSet::default(),
        )
        .unwrap()
    }

    #[test]
    fn round_trips_plain_text() {
        let model = small_model();
        for text in [
            "the quick brown fox",
            "completely unseen WORDS!?",
            "tabs\tand\nnewlines  and   runs",
            "unicode: héllo ∑ 漢字 🚀",
            "",
        ] {
            let ids = model.encode(text);
            assert_eq!(model.decode_bytes(&ids).unwrap(), text.as_bytes());
        }
    }

    #[test]
    fn special_tags_encode_to_single_ids() {
        let model = small_model();
        assert_eq!(model.encode("<|label|>"), vec![model.label_id()]);
        assert_eq!(model.encode("<|endoftext|>"), vec![model.end_id()]);
        assert_eq!(model.encode("<|pad|>"), vec![model.pad_id()]);
        let ids = model.encode("fox<|label|>dog<|endoftext|>");
        assert!(ids.contains(&model.label_id()));
        assert!(ids.contains(&model.end_id()));
        assert_eq!(
            model.decode(&ids).unwrap(),
            "fox<|label|>dog<|endoftext|>"
        );
    }

    #[test]
    fn tag_like_text_still_round_trips() {
        let model = small_model();
        for text in ["<|", "<|label", "<|labelx|>", "<|LABEL|>", "|>"] {
            let ids = model.encode(text);
            assert!(!ids.contains(&model.label_id()), "no tag id for {text:?}");
            assert_eq!(model.decode_bytes(&ids).unwrap(), text.as_bytes());
        }
    }

    #[test]
    fn invalid_utf8_round_trips_through_byte_path() {
        let model = small_model();
        let bytes: &[u8] = &[b't', b'h', b'e', 0xFF, 0xFE, b' ', b'f', b'o', b'x', 0xC3];
        let ids = model.encode_bytes(bytes);
        assert_eq!(model.decode_bytes(&ids).unwrap(), bytes);
        // Display decoding replaces the invalid runs instead of failing.
        assert!(model.decode(&ids).unwrap().contains('\u{FFFD}'));
    }

    #[test]
    fn merges_actually_compress() {
        let model = small_model();
        let text = "the quick brown fox jumps over the lazy dog";
        let ids = model.encode(text);
        assert!(ids.len() < text.len(), "{} !< {}", ids.len(), text.len());
    }

    #[test]
    fn cache_does_not_change_output() {
        let model = small_model();
        let text = "the fox the fox the fox jumps";
        let mut cache = EncodeCache::new();
        let cached = model.encode_with_cache(text, &mut cache);
        assert_eq!(cached, model.encode(text));
        assert!(!cache.is_empty());
        // A second pass through the warm cache is identical.
        assert_eq!(model.encode_with_cache(text, &mut cache), cached);
    }

    #[test]
    fn out_of_range_id_reports_position() {
        let model = small_model();
        let err = model.decode_bytes(&[0, 1, 9999]).unwrap_err();
        match err {
            TokenizerError::IdOutOfRange { id, position, vocab_size } => {
                assert_eq!(id, 9999);
                assert_eq!(position, 2);
                assert_eq!(vocab_size, model.vocab_size());
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn encoding_matches_training_segmentation() {
        // After training, re-encoding a corpus word must reproduce the
        // trainer's final segmentation — the merge loop applies rules in the
        // same order they were learned.
        let corpus = ["banana banana banana bandana bandana"];
        let model = train_bpe(corpus, 256 + 8 + 3, SpecialTagSet::default()).unwrap();
        let ids = model.encode("banana");
        assert_eq!(model.decode_bytes(&ids).unwrap(), b"banana");
        // "banana" occurs often enough that it fused into few symbols.
        assert!(ids.len() <= 2, "got {ids:?}");
    }
}
