//! The decoder-only transformer: configuration, parameters, forward pass,
//! training loss, incremental generation, and sequence scoring.
//!
//! Architecture: token embeddings (no learned position table — positions
//! enter through rotary mixing inside attention), a stack of
//! parallel-residual blocks, a final layer norm, and a language-model head.
//! Each block computes one shared layer norm whose output feeds *both* the
//! attention path and the feed-forward path; their results are added to the
//! residual stream together:
//!
//! ```text
//! x ← x + attn(ln(x)) + mlp(ln(x))
//! ```
//!
//! Attention projects queries, keys, and values in a single fused matrix,
//! applies rotary position mixing to the first `rotary_dim` channels of each
//! head, and masks causally. The attention and feed-forward projections
//! carry no biases except on the feed-forward layers' outputs, keeping the
//! parameter layout lean.

mod forward;
mod generate;

pub use forward::{Bound, KvCache};

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{Scalar, Tensor};

/// Hyperparameters of one model. Everything that affects the computation is
/// here; checkpoints embed a serialized copy so a model can always be
/// reconstructed from its weights file alone.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Channels per head that receive rotary position mixing (the rest pass
    /// through untouched). Must be even and at most `d_model / n_heads`.
    pub rotary_dim: usize,
    pub max_seq_len: usize,
    /// Reuse the embedding matrix as the output projection weight.
    pub tie_embeddings: bool,
    pub rotary_base: f64,
    pub ln_eps: f64,
    pub init_std: f64,
}

impl ModelConfig {
    /// Desk-scale preset: trains to convergence on one CPU core in minutes.
    pub fn tiny() -> Self {
        Self {
            vocab_size: 2048,
            d_model: 128,
            n_layers: 4,
            n_heads: 4,
            rotary_dim: 16,
            max_seq_len: 256,
            tie_embeddings: false,
            rotary_base: 10000.0,
            ln_eps: 1e-5,
            init_std: 0.02,
        }
    }

    /// ≈456M-parameter preset (documentation of scale, not runnable on a
    /// desk machine).
    pub fn million_456() -> Self {
        Self {
            vocab_size: 25129,
            d_model: 1024,
            n_layers: 32,
            n_heads: 16,
            rotary_dim: 32,
            max_seq_len: 2048,
            tie_embeddings: false,
            rotary_base: 10000.0,
            ln_eps: 1e-5,
            init_std: 0.02,
        }
    }

    /// ≈1.6B-parameter preset (documentation of scale).
    pub fn billion_1_6() -> Self {
        Self {
            d_model: 2048,
            n_layers: 30,
            ..Self::million_456()
        }
    }

    /// ≈6B-parameter preset (documentation of scale).
    pub fn billion_6() -> Self {
        Self {
            d_model: 4096,
            n_layers: 28,
            rotary_dim: 64,
            ..Self::million_456()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.vocab_size == 0 || self.d_model == 0 || self.n_layers == 0 || self.n_heads == 0 {
            return Err("vocab_size, d_model, n_layers, n_heads must be positive".into());
        }
        if self.max_seq_len == 0 {
            return Err("max_seq_len must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if !self.rotary_dim.is_multiple_of(2) {
            return Err(format!("rotary_dim {} must be even", self.rotary_dim));
        }
        if self.rotary_dim > self.head_dim() {
            return Err(format!(
                "rotary_dim {} exceeds head dim {}",
                self.rotary_dim,
                self.head_dim()
            ));
        }
        if !(self.rotary_base.is_finite() && self.rotary_base > 1.0) {
            return Err("rotary_base must be finite and > 1".into());
        }
        if !(self.ln_eps.is_finite() && self.ln_eps > 0.0) {
            return Err("ln_eps must be finite and positive".into());
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return Err("init_std must be finite and positive".into());
        }
        Ok(())
    }

    /// Exact trainable-parameter count for this configuration.
    ///
    /// Per block: layer norm `2d`, fused qkv `3d²`, attention output `d²`,
    /// feed-forward `4d² + 4d` in and `4d² + d` out. Plus embeddings `V·d`,
    /// final norm `2d`, and the head (`V·d` weight unless tied, bias `V`).
    pub fn param_count(&self) -> usize {
        let d = self.d_model;
        let v = self.vocab_size;
        let per_layer = 2 * d + 3 * d * d + d * d + (4 * d * d + 4 * d) + (4 * d * d + d);
        let head_weight = if self.tie_embeddings { 0 } else { v * d };
        v * d + self.n_layers * per_layer + 2 * d + head_weight + v
    }
}

/// Named parameter tensors in a fixed creation order. The order is the
/// contract for checkpoint layout and optimizer-state pairing, so it never
/// depends on hash-map iteration.
#[derive(Debug, Clone)]
pub struct Params<S: Scalar> {
    entries: Vec<(String, Tensor<S>)>,
    index: HashMap<String, usize>,
}

impl<S: Scalar> Params<S> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<S>) {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter {name}"
        );
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor));
    }

    pub fn get(&self, name: &str) -> &Tensor<S> {
        let idx = self.index[name];
        &self.entries[idx].1
    }

    pub fn position(&self, name: &str) -> usize {
        self.index[name]
    }

    /// Replace a tensor (same name, same shape).
    pub fn set(&mut self, name: &str, tensor: Tensor<S>) {
        let idx = self.index[name];
        assert_eq!(
            self.entries[idx].1.shape(),
            tensor.shape(),
            "shape change for parameter {name}"
        );
        self.entries[idx].1 = tensor;
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count across all tensors.
    pub fn n_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }
}

impl<S: Scalar> Default for Params<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// A transformer: configuration plus parameters.
#[derive(Debug, Clone)]
pub struct Model<S: Scalar> {
    pub config: ModelConfig,
    pub params: Params<S>,
}

impl<S: Scalar> Model<S> {
    /// Initialize fresh parameters from a seed. Weights draw from
    /// N(0, init_std²); the two projections that write into the residual
    /// stream (attention output, feed-forward output) are scaled down by
    /// 1/√(2·n_layers) so the stream's variance stays bounded at init; norms
    /// start at identity and biases at zero. The draw order is the registry
    /// order, making initialization a pure function of (config, seed).
    pub fn new(config: ModelConfig, seed: u64) -> Self {
        config.validate().expect("invalid model configuration");
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let d = config.d_model;
        let v = config.vocab_size;
        let residual_scale = 1.0 / ((2 * config.n_layers) as f64).sqrt();

        let mut normal = |shape: Vec<usize>, std: f64| -> Tensor<S> {
            let dist = Normal::new(0.0, std).expect("valid normal");
            let n: usize = shape.iter().product();
            let data: Vec<S> = (0..n)
                .map(|_| S::from_f64(dist.sample(&mut rng)))
                .collect();
            Tensor::new(shape, data)
        };

        let mut params = Params::new();
        params.insert("wte", normal(vec![v, d], config.init_std));
        for i in 0..config.n_layers {
            let p = |s: &str| format!("layers.{i}.{s}");
            params.insert(p("ln.gain"), Tensor::full(vec![d], S::ONE));
            params.insert(p("ln.bias"), Tensor::zeros(vec![d]));
            params.insert(p("attn.qkv.weight"), normal(vec![3 * d, d], config.init_std));
            params.insert(
                p("attn.out.weight"),
                normal(vec![d, d], config.init_std * residual_scale),
            );
            params.insert(p("mlp.fc_in.weight"), normal(vec![4 * d, d], config.init_std));
            params.insert(p("mlp.fc_in.bias"), Tensor::zeros(vec![4 * d]));
            params.insert(
                p("mlp.fc_out.weight"),
                normal(vec![d, 4 * d], config.init_std * residual_scale),
            );
            params.insert(p("mlp.fc_out.bias"), Tensor::zeros(vec![d]));
        }
        params.insert("ln_f.gain", Tensor::full(vec![d], S::ONE));
        params.insert("ln_f.bias", Tensor::zeros(vec![d]));
        if !config.tie_embeddings {
            params.insert("lm_head.weight", normal(vec![v, d], config.init_std));
        }
        params.insert("lm_head.bias", Tensor::zeros(vec![v]));

        Self { config, params }
    }

    /// Rebuild from existing parts (checkpoint load).
    pub fn from_parts(config: ModelConfig, params: Params<S>) -> Self {
        config.validate().expect("invalid model configuration");
        Self { config, params }
    }
}

/// The exact parameter inventory — names and shapes in registry order — that
/// [`Model::new`] produces for a configuration. Checkpoint loading validates
/// serialized tensors against this without paying for an initialization.
pub fn param_specs(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = config.d_model;
    let v = config.vocab_size;
    let mut specs = vec![("wte".to_string(), vec![v, d])];
    for i in 0..config.n_layers {
        let p = |s: &str| format!("layers.{i}.{s}");
        specs.push((p("ln.gain"), vec![d]));
        specs.push((p("ln.bias"), vec![d]));
        specs.push((p("attn.qkv.weight"), vec![3 * d, d]));
        specs.push((p("attn.out.weight"), vec![d, d]));
        specs.push((p("mlp.fc_in.weight"), vec![4 * d, d]));
        specs.push((p("mlp.fc_in.bias"), vec![4 * d]));
        specs.push((p("mlp.fc_out.weight"), vec![d, 4 * d]));
        specs.push((p("mlp.fc_out.bias"), vec![d]));
    }
    specs.push(("ln_f.gain".to_string(), vec![d]));
    specs.push(("ln_f.bias".to_string(), vec![d]));
    if !config.tie_embeddings {
        specs.push(("lm_head.weight".to_string(), vec![v, d]));
    }
    specs.push(("lm_head.bias".to_string(), vec![v]));
    specs
}
