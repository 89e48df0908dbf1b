//! Corpus ingestion: text documents → tokenized binary shards + index.

use std::path::Path;

use walkdir::WalkDir;

use super::shard::write_shard;
use super::{DataError, DatasetIndex};
use crate::tokenizer::{EncodeCache, TokenizerModel};

/// What ingestion processed and what it refused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestReport {
    /// Documents tokenized (files for `.txt`, records for `.jsonl`).
    pub documents: u64,
    /// Files or records skipped with a warning.
    pub skipped: u64,
    /// Total token ids written, end tags included.
    pub tokens: u64,
    /// Shard files produced.
    pub shards: u64,
}

/// Accumulates the token stream and cuts it into fixed-size shard files.
struct ShardWriter<'a> {
    out_dir: &'a Path,
    shard_size: usize,
    fingerprint: u64,
    buffer: Vec<u32>,
    shards: Vec<(String, u64)>,
}

impl<'a> ShardWriter<'a> {
    fn push(&mut self, ids: &[u32]) -> Result<(), DataError> {
        for &id in ids {
            self.buffer.push(id);
            if self.buffer.len() == self.shard_size {
                self.flush()?;
            }
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<(), DataError> {
        if self.buffer.is_empty() {
            return Ok(());
        }
        let name = format!("shard-{:05}.lexd", self.shards.len());
        write_shard(&self.out_dir.join(&name), self.fingerprint, &self.buffer)?;
        self.shards.push((name, self.buffer.len() as u64));
        self.buffer.clear();
        Ok(())
    }
}

/// Walk every `.txt` / `.jsonl` file under `input_dir` in sorted path order
/// and invoke `f` once per decodable document. `.txt` files hold one
/// document each; `.jsonl` files hold one JSON record per line with the
/// document under a `"text"` key. Undecodable files and records are skipped
/// with a warning; the skip count is returned.
pub fn for_each_document(
    input_dir: &Path,
    mut f: impl FnMut(&str) -> Result<(), DataError>,
) -> Result<u64, DataError> {
    let mut paths: Vec<_> = WalkDir::new(input_dir)
        .into_iter()
        .filter_map(|entry| entry.ok())
        .filter(|entry| entry.file_type().is_file())
        .map(|entry| entry.into_path())
        .collect();
    paths.sort();

    let mut skipped = 0u64;
    for path in &paths {
        let extension = path.extension().and_then(|e| e.to_str());
        match extension {
            Some("txt") => match std::fs::read(path).map(String::from_utf8) {
                Ok(Ok(text)) => f(&text)?,
                Ok(Err(e)) => {
                    log::warn!("skipping {}: not valid UTF-8 ({e})", path.display());
                    skipped += 1;
                }
                Err(e) => {
                    log::warn!("skipping {}: {e}", path.display());
                    skipped += 1;
                }
            },
            Some("jsonl") => {
                let text = match std::fs::read_to_string(path) {
                    Ok(t) => t,
                    Err(e) => {
                        log::warn!("skipping {}: {e}", path.display());
                        skipped += 1;
                        continue;
                    }
                };
                for (line_no, line) in text.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let doc = serde_json::from_str::<serde_json::Value>(line)
                        .ok()
                        .and_then(|v| v.get("text").and_then(|t| t.as_str()).map(String::from));
                    match doc {
                        Some(doc_text) => f(&doc_text)?,
                        None => {
                            log::warn!(
                                "skipping {} line {}: not a JSON object with a \"text\" field",
                                path.display(),
                                line_no + 1
                            );
                            skipped += 1;
                        }
                    }
                }
            }
            _ => {
                log::warn!("skipping {}: unsupported file type", path.display());
                skipped += 1;
            }
        }
    }
    Ok(skipped)
}

/// Collect every document under `input_dir` into memory (tokenizer training
/// needs multiple passes). Returns the documents and the skip count; zero
/// usable documents is an error.
pub fn collect_documents(input_dir: &Path) -> Result<(Vec<String>, u64), DataError> {
    let mut docs = Vec::new();
    let skipped = for_each_document(input_dir, |text| {
        docs.push(text.to_string());
        Ok(())
    })?;
    if docs.is_empty() {
        return Err(DataError::NoDocuments {
            path: input_dir.to_path_buf(),
        });
    }
    Ok((docs, skipped))
}

/// Tokenize every document under `input_dir` (sorted lexicographically by
/// path for determinism), append the end tag after each document, and stream
/// the ids into shards of at most `shard_size_tokens`. Writes `index.tsv`
/// plus the shard files into `out_dir` and returns the index with a
/// processing report.
pub fn ingest(
    input_dir: &Path,
    tokenizer: &TokenizerModel,
    out_dir: &Path,
    shard_size_tokens: usize,
) -> Result<(DatasetIndex, IngestReport), DataError> {
    assert!(shard_size_tokens > 0, "shard size must be positive");
    std::fs::create_dir_all(out_dir)?;

    let mut report = IngestReport {
        documents: 0,
        skipped: 0,
        tokens: 0,
        shards: 0,
    };
    let mut writer = ShardWriter {
        out_dir,
        shard_size: shard_size_tokens,
        fingerprint: tokenizer.fingerprint(),
        buffer: Vec::with_capacity(shard_size_tokens),
        shards: Vec::new(),
    };
    let mut cache = EncodeCache::new();
    let end = [tokenizer.end_id()];

    report.skipped = for_each_document(input_dir, |text| {
        let ids = tokenizer.encode_with_cache(text, &mut cache);
        writer.push(&ids)?;
        writer.push(&end)?;
        report.documents += 1;
        report.tokens += ids.len() as u64 + 1;
        Ok(())
    })?;

    if report.documents == 0 {
        return Err(DataError::NoDocuments {
            path: input_dir.to_path_buf(),
        });
    }
    writer.flush()?;
    report.shards = writer.shards.len() as u64;

    let index = DatasetIndex {
        total_tokens: writer.shards.iter().map(|(_, c)| c).sum(),
        shards: writer.shards,
    };
    index.save(&out_dir.join("index.tsv"))?;
    Ok((index, report))
}
