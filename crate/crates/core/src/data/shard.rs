//! Token shard files: fixed-width binary containers for tokenized corpora.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        b"LEXD"
//! version      u32
//! fingerprint  u64   — tokenizer fingerprint the ids belong to
//! count        u64   — number of token ids
//! payload      count × u32
//! ```

use std::path::Path;

use super::DataError;

const MAGIC: &[u8; 4] = b"LEXD";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

/// Write `ids` as one shard stamped with the tokenizer's fingerprint.
pub fn write_shard(path: &Path, tokenizer_fingerprint: u64, ids: &[u32]) -> Result<(), DataError> {
    let mut bytes = Vec::with_capacity(HEADER_LEN + ids.len() * 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&tokenizer_fingerprint.to_le_bytes());
    bytes.extend_from_slice(&(ids.len() as u64).to_le_bytes());
    for &id in ids {
        bytes.extend_from_slice(&id.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Read a shard back. When `expected_fingerprint` is given, a shard written
/// under a different tokenizer is refused — its ids would be meaningless.
pub fn read_shard(path: &Path, expected_fingerprint: Option<u64>) -> Result<Vec<u32>, DataError> {
    let bytes = std::fs::read(path)?;
    let fail = |message: String| DataError::Format {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < HEADER_LEN {
        return Err(fail("file shorter than the shard header".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(fail("bad magic: not a token shard".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(fail(format!(
            "unsupported shard version {version} (expected {VERSION})"
        )));
    }
    let stored = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    if let Some(expected) = expected_fingerprint {
        if stored != expected {
            return Err(DataError::FingerprintMismatch {
                path: path.to_path_buf(),
                stored,
                expected,
            });
        }
    }
    let count = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != count * 4 {
        return Err(fail(format!(
            "declared count {count} needs {} payload bytes, file holds {}",
            count * 4,
            payload.len()
        )));
    }
    Ok(payload
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
