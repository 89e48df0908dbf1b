//! Self-contained binary checkpoints.
//!
//! A checkpoint freezes everything a run needs to continue bit-exactly:
//! model config + parameters, Adam moments, the step counter, loss EMA,
//! tokens seen, the data cursor, the training config, and the fingerprint of
//! the tokenizer the token ids refer to.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    b"LEXF"
//! version  u32
//! meta_len u64
//! meta     JSON (configs, scalars, and a tensor manifest of
//!          {name, shape, offset, len} entries; offsets are relative to the
//!          payload that follows and strictly sequential)
//! payload  raw tensor data, IEEE 754 little-endian
//! digest   u64 FNV-1a over every preceding byte
//! ```
//!
//! Loads verify magic, version, digest, dtype, the parameter inventory
//! against the model config, moment/parameter pairing, and (when the caller
//! supplies one) the tokenizer fingerprint. Writes go through a temp file
//! and rename so an interrupted save never leaves a truncated checkpoint in
//! place.

use std::path::Path;

use super::{AdamState, TrainConfig, TrainError, TrainState};
use crate::model::{param_specs, Model, ModelConfig, Params};
use crate::tensor::{Scalar, Tensor};
use crate::util::Fnv1a;

const MAGIC: &[u8; 4] = b"LEXF";
const VERSION: u32 = 1;

#[derive(serde::Serialize, serde::Deserialize)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    /// Byte offset into the payload.
    offset: u64,
    /// Element count (shape product, stored for cheap validation).
    len: u64,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Meta {
    dtype: String,
    model_config: ModelConfig,
    train_config: TrainConfig,
    step: u64,
    tokens_seen: u64,
    ema_loss: Option<f64>,
    data_cursor: u64,
    tokenizer_fingerprint: u64,
    tensors: Vec<TensorEntry>,
}

/// Everything reconstructed from a checkpoint file.
#[derive(Debug)]
pub struct CheckpointContents<S: Scalar> {
    pub model: Model<S>,
    pub state: TrainState<S>,
    pub train_config: TrainConfig,
    pub data_cursor: u64,
    pub tokenizer_fingerprint: u64,
}

fn err(path: &Path, message: impl Into<String>) -> TrainError {
    TrainError::Checkpoint {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Serialize a full training snapshot to `path`.
#[allow(clippy::too_many_arguments)]
pub fn save_checkpoint<S: Scalar>(
    path: &Path,
    model: &Model<S>,
    state: &TrainState<S>,
    train_config: &TrainConfig,
    data_cursor: u64,
    tokenizer_fingerprint: u64,
) -> Result<(), TrainError> {
    let mut payload = Vec::new();
    let mut entries = Vec::new();
    let mut push = |name: String, tensor: &Tensor<S>, payload: &mut Vec<u8>| {
        entries.push(TensorEntry {
            name,
            dtype: S::DTYPE.to_string(),
            shape: tensor.shape().to_vec(),
            offset: payload.len() as u64,
            len: tensor.len() as u64,
        });
        for &x in tensor.data() {
            x.write_le(payload);
        }
    };
    for (name, tensor) in model.params.iter() {
        push(name.to_string(), tensor, &mut payload);
    }
    let (m, v) = state.adam.moments();
    for ((name, _), tensor) in model.params.iter().zip(m) {
        push(format!("adam.m.{name}"), tensor, &mut payload);
    }
    for ((name, _), tensor) in model.params.iter().zip(v) {
        push(format!("adam.v.{name}"), tensor, &mut payload);
    }

    let meta = Meta {
        dtype: S::DTYPE.to_string(),
        model_config: model.config.clone(),
        train_config: train_config.clone(),
        step: state.step,
        tokens_seen: state.tokens_seen,
        ema_loss: state.ema_loss,
        data_cursor,
        tokenizer_fingerprint,
        tensors: entries,
    };
    let meta_bytes =
        serde_json::to_vec(&meta).map_err(|e| err(path, format!("meta encode: {e}")))?;

    let mut file = Vec::with_capacity(4 + 4 + 8 + meta_bytes.len() + payload.len() + 8);
    file.extend_from_slice(MAGIC);
    file.extend_from_slice(&VERSION.to_le_bytes());
    file.extend_from_slice(&(meta_bytes.len() as u64).to_le_bytes());
    file.extend_from_slice(&meta_bytes);
    file.extend_from_slice(&payload);
    let mut hasher = Fnv1a::new();
    hasher.update(&file);
    file.extend_from_slice(&hasher.finish().to_le_bytes());

    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &file)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Load and validate a checkpoint. `expected_tokenizer_fingerprint`, when
/// given, must match the fingerprint stored at save time — token ids are
/// meaningless under a different tokenizer.
pub fn load_checkpoint<S: Scalar>(
    path: &Path,
    expected_tokenizer_fingerprint: Option<u64>,
) -> Result<CheckpointContents<S>, TrainError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 4 + 4 + 8 + 8 {
        return Err(err(path, "file too short to be a checkpoint"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(err(path, "bad magic: not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(err(
            path,
            format!("unsupported checkpoint version {version} (expected {VERSION})"),
        ));
    }
    let digest_at = bytes.len() - 8;
    let stored = u64::from_le_bytes(bytes[digest_at..].try_into().unwrap());
    let mut hasher = Fnv1a::new();
    hasher.update(&bytes[..digest_at]);
    if hasher.finish() != stored {
        return Err(err(path, "integrity digest mismatch: file is corrupt"));
    }

    let meta_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let meta_end = 16usize
        .checked_add(meta_len)
        .filter(|&e| e <= digest_at)
        .ok_or_else(|| err(path, "meta length exceeds file size"))?;
    let meta: Meta = serde_json::from_slice(&bytes[16..meta_end])
        .map_err(|e| err(path, format!("meta decode: {e}")))?;
    if meta.dtype != S::DTYPE {
        return Err(err(
            path,
            format!("dtype mismatch: file holds {}, caller wants {}", meta.dtype, S::DTYPE),
        ));
    }
    if let Some(expected) = expected_tokenizer_fingerprint {
        if meta.tokenizer_fingerprint != expected {
            return Err(err(
                path,
                format!(
                    "tokenizer fingerprint mismatch: checkpoint {:#018x}, current {:#018x}",
                    meta.tokenizer_fingerprint, expected
                ),
            ));
        }
    }
    meta.model_config
        .validate()
        .map_err(|m| err(path, format!("model config: {m}")))?;

    let payload = &bytes[meta_end..digest_at];
    let specs = param_specs(&meta.model_config);
    let expected_entries = 3 * specs.len();
    if meta.tensors.len() != expected_entries {
        return Err(err(
            path,
            format!(
                "tensor manifest holds {} entries, expected {} ({} parameters × 3)",
                meta.tensors.len(),
                expected_entries,
                specs.len()
            ),
        ));
    }

    let mut cursor = 0u64;
    let mut read_tensor = |entry: &TensorEntry,
                           want_name: &str,
                           want_shape: &[usize]|
     -> Result<Tensor<S>, TrainError> {
        if entry.name != want_name {
            return Err(err(
                path,
                format!("tensor order: found {}, expected {want_name}", entry.name),
            ));
        }
        if entry.dtype != S::DTYPE {
            return Err(err(
                path,
                format!("dtype of {}: file says {}, expected {}", entry.name, entry.dtype, S::DTYPE),
            ));
        }
        if entry.shape != want_shape {
            return Err(err(
                path,
                format!(
                    "shape of {}: file says {:?}, config requires {:?}",
                    entry.name, entry.shape, want_shape
                ),
            ));
        }
        let count: usize = entry.shape.iter().product();
        if entry.len as usize != count || entry.offset != cursor {
            return Err(err(path, format!("manifest layout broken at {}", entry.name)));
        }
        let start = entry.offset as usize;
        let end = start + count * S::BYTE_WIDTH;
        if end > payload.len() {
            return Err(err(path, format!("payload truncated at {}", entry.name)));
        }
        cursor = end as u64;
        let data: Vec<S> = payload[start..end]
            .chunks_exact(S::BYTE_WIDTH)
            .map(S::read_le)
            .collect();
        Ok(Tensor::new(entry.shape.clone(), data))
    };

    let mut params = Params::new();
    for (i, (name, shape)) in specs.iter().enumerate() {
        params.insert(name.clone(), read_tensor(&meta.tensors[i], name, shape)?);
    }
    let mut m = Vec::with_capacity(specs.len());
    for (i, (name, shape)) in specs.iter().enumerate() {
        let entry = &meta.tensors[specs.len() + i];
        m.push(read_tensor(entry, &format!("adam.m.{name}"), shape)?);
    }
    let mut v = Vec::with_capacity(specs.len());
    for (i, (name, shape)) in specs.iter().enumerate() {
        let entry = &meta.tensors[2 * specs.len() + i];
        v.push(read_tensor(entry, &format!("adam.v.{name}"), shape)?);
    }
    if cursor as usize != payload.len() {
        return Err(err(path, "payload holds trailing bytes beyond the manifest"));
    }

    Ok(CheckpointContents {
        model: Model::from_parts(meta.model_config, params),
        state: TrainState {
            step: meta.step,
            ema_loss: meta.ema_loss,
            tokens_seen: meta.tokens_seen,
            adam: AdamState::from_parts(m, v),
        },
        train_config: meta.train_config,
        data_cursor: meta.data_cursor,
        tokenizer_fingerprint: meta.tokenizer_fingerprint,
    })
}
