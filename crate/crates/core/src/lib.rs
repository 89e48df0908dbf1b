//! Desk-scale GPT pipeline: domain tokenizer, tensor engine with reverse-mode
//! autodiff, decoder-only transformer, training loop, corpus sharding, and a
//! no-code classifier built purely from the generative model.
//!
//! The crate is organized the way the pipeline runs:
//!
//! - [`tokenizer`]: byte-level BPE training, encode/decode, on-disk format
//! - [`tensor`]: dense float tensors on a gradient tape
//! - [`model`]: the transformer (forward, loss, generation, scoring)
//! - [`trainer`]: Adam, LR schedule, checkpoints, the training loop
//! - [`data`]: corpus ingestion into token shards and batch sampling
//! - [`classify`]: label-tag formatting, fine-tuning, and label prediction
//! - [`eval`]: accuracy / micro-F1 / macro-F1 and report files

pub mod classify;
pub mod config;
pub mod data;
pub mod eval;
pub mod model;
pub mod tensor;
pub mod threads;
pub mod tokenizer;
pub mod trainer;
pub mod util;
