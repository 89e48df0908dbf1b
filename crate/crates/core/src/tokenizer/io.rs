//! Tokenizer on-disk format: three plain-text files in one directory.
//!
//! - `vocab.txt` — one token per line, `{id}\t{base64 of bytes}`. Base64
//!   keeps arbitrary byte content (newlines, tabs, invalid UTF-8) printable.
//! - `merges.txt` — one rule per line, `{left_id} {right_id}`, in rank
//!   order. Ids are used instead of byte content because two distinct tokens
//!   can share identical bytes.
//! - `special_tokens.txt` — one tag per line, `{role}\t{id}\t{tag}`, roles
//!   `label`, `end`, `pad`.
//!
//! Loading rebuilds the model and re-checks every structural invariant, so a
//! hand-edited or truncated file fails with a line-numbered parse error
//! rather than producing a silently wrong tokenizer.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;

use super::{SpecialTagSet, TokenizerError, TokenizerModel, BYTE_TOKENS};

const VOCAB_FILE: &str = "vocab.txt";
const MERGES_FILE: &str = "merges.txt";
const SPECIAL_FILE: &str = "special_tokens.txt";

/// Write a tokenizer into `dir`, creating it if needed.
pub fn save_tokenizer(model: &TokenizerModel, dir: &Path) -> Result<(), TokenizerError> {
    fs::create_dir_all(dir)?;

    let mut vocab = String::new();
    for id in 0..model.vocab_size() as u32 {
        let bytes = model.token_bytes(id).expect("dense vocab");
        vocab.push_str(&format!("{id}\t{}\n", BASE64.encode(bytes)));
    }
    fs::write(dir.join(VOCAB_FILE), vocab)?;

    let mut merges = String::new();
    for &(left, right) in model.merges() {
        merges.push_str(&format!("{left} {right}\n"));
    }
    fs::write(dir.join(MERGES_FILE), merges)?;

    let mut special = String::new();
    for ((tag, id), role) in model.special_tokens().iter().zip(["label", "end", "pad"]) {
        special.push_str(&format!("{role}\t{id}\t{tag}\n"));
    }
    fs::write(dir.join(SPECIAL_FILE), special)?;
    Ok(())
}

/// Read a tokenizer back from `dir`.
pub fn load_tokenizer(dir: &Path) -> Result<TokenizerModel, TokenizerError> {
    let parse = |path: &Path, line: usize, message: String| TokenizerError::Parse {
        path: path.display().to_string(),
        line,
        message,
    };

    // vocab.txt → dense id → bytes table.
    let vocab_path = dir.join(VOCAB_FILE);
    let text = fs::read_to_string(&vocab_path)?;
    let n_lines = text.lines().count();
    let mut slots: Vec<Option<Vec<u8>>> = vec![None; n_lines];
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let (id_str, b64) = line
            .split_once('\t')
            .ok_or_else(|| parse(&vocab_path, lineno, "expected `{id}\\t{base64}`".into()))?;
        let id: usize = id_str
            .parse()
            .map_err(|e| parse(&vocab_path, lineno, format!("bad token id {id_str:?}: {e}")))?;
        let bytes = BASE64
            .decode(b64)
            .map_err(|e| parse(&vocab_path, lineno, format!("bad base64: {e}")))?;
        let slot = slots
            .get_mut(id)
            .ok_or_else(|| parse(&vocab_path, lineno, format!("token id {id} out of range for {n_lines} lines")))?;
        if slot.is_some() {
            return Err(parse(&vocab_path, lineno, format!("duplicate token id {id}")));
        }
        *slot = Some(bytes);
    }
    let mut vocab = Vec::with_capacity(n_lines);
    for (id, slot) in slots.into_iter().enumerate() {
        vocab.push(slot.ok_or_else(|| parse(&vocab_path, n_lines, format!("missing token id {id}")))?);
    }

    // merges.txt → ordered rule list.
    let merges_path = dir.join(MERGES_FILE);
    let text = fs::read_to_string(&merges_path)?;
    let mut merges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let (l, r) = line
            .split_once(' ')
            .ok_or_else(|| parse(&merges_path, lineno, "expected `{left_id} {right_id}`".into()))?;
        let left: u32 = l
            .parse()
            .map_err(|e| parse(&merges_path, lineno, format!("bad left id {l:?}: {e}")))?;
        let right: u32 = r
            .parse()
            .map_err(|e| parse(&merges_path, lineno, format!("bad right id {r:?}: {e}")))?;
        merges.push((left, right));
    }

    // special_tokens.txt → tag set; roles must appear exactly once, in order.
    let special_path = dir.join(SPECIAL_FILE);
    let text = fs::read_to_string(&special_path)?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let mut parts = line.splitn(3, '\t');
        let role = parts.next().unwrap_or_default();
        let id = parts
            .next()
            .ok_or_else(|| parse(&special_path, lineno, "expected `{role}\\t{id}\\t{tag}`".into()))?;
        let tag = parts
            .next()
            .ok_or_else(|| parse(&special_path, lineno, "expected `{role}\\t{id}\\t{tag}`".into()))?;
        let id: u32 = id
            .parse()
            .map_err(|e| parse(&special_path, lineno, format!("bad tag id {id:?}: {e}")))?;
        entries.push((role.to_string(), id, tag.to_string(), lineno));
    }
    if entries.len() != 3 || entries[0].0 != "label" || entries[1].0 != "end" || entries[2].0 != "pad" {
        return Err(parse(
            &special_path,
            entries.len(),
            "expected exactly three roles in order: label, end, pad".into(),
        ));
    }
    let first_special = (BYTE_TOKENS + merges.len()) as u32;
    for (i, (role, id, _, lineno)) in entries.iter().enumerate() {
        let expected = first_special + i as u32;
        if *id != expected {
            return Err(parse(
                &special_path,
                *lineno,
                format!("role {role} has id {id}, expected {expected} (256 bytes + {} merges place tags there)", merges.len()),
            ));
        }
    }
    let tags = SpecialTagSet {
        label_tag: entries[0].2.clone(),
        end_tag: entries[1].2.clone(),
        pad_tag: entries[2].2.clone(),
    };

    TokenizerModel::from_parts(vocab, merges, tags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::train_bpe;

    fn trained() -> TokenizerModel {
        train_bpe(
            ["the cat sat on the mat", "the bat and the rat sat"],
            256 + 16 + 3,
            SpecialTagSet::default(),
        )
        .unwrap()
    }

    #[test]
    fn save_load_round_trip_preserves_everything() {
        let model = trained();
        let dir = tempfile::tempdir().unwrap();
        save_tokenizer(&model, dir.path()).unwrap();
        let loaded = load_tokenizer(dir.path()).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(loaded.fingerprint(), model.fingerprint());
        let text = "the cat<|endoftext|>";
        assert_eq!(loaded.encode(text), model.encode(text));
    }

    #[test]
    fn truncated_vocab_is_rejected_with_parse_error() {
        let model = trained();
        let dir = tempfile::tempdir().unwrap();
        save_tokenizer(&model, dir.path()).unwrap();
        let vocab_path = dir.path().join("vocab.txt");
        let text = fs::read_to_string(&vocab_path).unwrap();
        // Drop one mid-table line: the table is no longer dense, which shows
        // up either as a gap or as a now-out-of-range top id.
        let keep: Vec<&str> = text.lines().filter(|l| !l.starts_with("12\t")).collect();
        fs::write(&vocab_path, keep.join("\n") + "\n").unwrap();
        let err = load_tokenizer(dir.path()).unwrap_err();
        match err {
            TokenizerError::Parse { message, path, .. } => {
                assert!(path.ends_with("vocab.txt"), "{path}");
                assert!(message.contains("token id"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn corrupt_merge_line_reports_line_number() {
        let model = trained();
        let dir = tempfile::tempdir().unwrap();
        save_tokenizer(&model, dir.path()).unwrap();
        let merges_path = dir.path().join("merges.txt");
        let mut text = fs::read_to_string(&merges_path).unwrap();
        text.push_str("not-a-pair\n");
        fs::write(&merges_path, text).unwrap();
        let err = load_tokenizer(dir.path()).unwrap_err();
        match err {
            TokenizerError::Parse { line, path, .. } => {
                assert_eq!(line, model.merges().len() + 1);
                assert!(path.ends_with("merges.txt"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_merge_rule_rejected() {
        let model = trained();
        let dir = tempfile::tempdir().unwrap();
        save_tokenizer(&model, dir.path()).unwrap();
        let merges_path = dir.path().join("merges.txt");
        let text = fs::read_to_string(&merges_path).unwrap();
        let first = text.lines().next().unwrap().to_string();
        // Repeat the first rule at the end; the vocab no longer lines up and
        // the duplicate is structural corruption either way.
        fs::write(&merges_path, format!("{text}{first}\n")).unwrap();
        assert!(load_tokenizer(dir.path()).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_tokenizer(dir.path()),
            Err(TokenizerError::Io(_))
        ));
    }
}
