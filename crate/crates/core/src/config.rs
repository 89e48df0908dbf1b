//! Flat key=value configuration files.
//!
//! One `key = value` pair per line; `#` starts a comment line; keys cover
//! every model and training hyperparameter, plus `preset` to start from a
//! named model size. Unknown keys are errors — a typo must never silently
//! train the wrong model. Command-line flags are applied after the file, so
//! a flag always wins.

use std::path::{Path, PathBuf};

use crate::model::ModelConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}, line {line}: expected `key = value`, got {text:?}")]
    Malformed {
        path: PathBuf,
        line: usize,
        text: String,
    },
    #[error("unknown configuration key {key:?}")]
    UnknownKey { key: String },
    #[error("key {key:?}: cannot parse {value:?} as {expected}")]
    BadValue {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// A complete, resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            model: ModelConfig::tiny(),
            train: TrainConfig::default(),
        }
    }
}

fn parse_as<T: std::str::FromStr>(
    key: &str,
    value: &str,
    expected: &'static str,
) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        expected,
    })
}

impl Settings {
    /// Parse a config file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let mut settings = Self::default();
        settings.apply_file(path)?;
        Ok(settings)
    }

    /// Apply every assignment in a file, in order.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                text: raw.to_string(),
            })?;
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Apply one assignment. `preset` must come before any model key it
    /// should not overwrite.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "preset" => {
                self.model = match value {
                    "tiny" => ModelConfig::tiny(),
                    "456m" => ModelConfig::million_456(),
                    "1.6b" => ModelConfig::billion_1_6(),
                    "6b" => ModelConfig::billion_6(),
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.into(),
                            value: value.into(),
                            expected: "one of tiny, 456m, 1.6b, 6b",
                        })
                    }
                };
            }
            // Model geometry.
            "vocab_size" => self.model.vocab_size = parse_as(key, value, "unsigned integer")?,
            "d_model" => self.model.d_model = parse_as(key, value, "unsigned integer")?,
            "n_layers" => self.model.n_layers = parse_as(key, value, "unsigned integer")?,
            "n_heads" => self.model.n_heads = parse_as(key, value, "unsigned integer")?,
            "rotary_dim" => self.model.rotary_dim = parse_as(key, value, "unsigned integer")?,
            "max_seq_len" => self.model.max_seq_len = parse_as(key, value, "unsigned integer")?,
            "tie_embeddings" => {
                self.model.tie_embeddings = parse_as(key, value, "true or false")?
            }
            "rotary_base" => self.model.rotary_base = parse_as(key, value, "number")?,
            "ln_eps" => self.model.ln_eps = parse_as(key, value, "number")?,
            "init_std" => self.model.init_std = parse_as(key, value, "number")?,
            // Training schedule and optimizer.
            "total_steps" => self.train.total_steps = parse_as(key, value, "unsigned integer")?,
            "batch_size" => self.train.batch_size = parse_as(key, value, "unsigned integer")?,
            "seq_len" => self.train.seq_len = parse_as(key, value, "unsigned integer")?,
            "warmup_steps" => self.train.warmup_steps = parse_as(key, value, "unsigned integer")?,
            "lr_max" => self.train.lr_max = parse_as(key, value, "number")?,
            "lr_min" => self.train.lr_min = parse_as(key, value, "number")?,
            "beta1" => self.train.beta1 = parse_as(key, value, "number")?,
            "beta2" => self.train.beta2 = parse_as(key, value, "number")?,
            "adam_eps" => self.train.adam_eps = parse_as(key, value, "number")?,
            "weight_decay" => self.train.weight_decay = parse_as(key, value, "number")?,
            "clip_norm" => self.train.clip_norm = parse_as(key, value, "number")?,
            "ema_alpha" => self.train.ema_alpha = parse_as(key, value, "number")?,
            "log_every" => self.train.log_every = parse_as(key, value, "unsigned integer")?,
            "checkpoint_every" => {
                self.train.checkpoint_every = parse_as(key, value, "unsigned integer")?
            }
            "pad_id" => {
                self.train.pad_id = if value.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(parse_as(key, value, "token id or `none`")?)
                }
            }
            "seed" => self.train.seed = parse_as(key, value, "unsigned integer")?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Validate both halves together.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate().map_err(ConfigError::Invalid)?;
        self.train.validate().map_err(ConfigError::Invalid)?;
        if self.train.seq_len > self.model.max_seq_len {
            return Err(ConfigError::Invalid(format!(
                "seq_len {} exceeds the model's max_seq_len {}",
                self.train.seq_len, self.model.max_seq_len
            )));
        }
        Ok(())
    }

    /// Echo the resolved configuration as sorted `key = value` lines —
    /// parseable by [`Settings::apply_file`], embedded in run manifests.
    pub fn to_kv_text(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let pad = match t.pad_id {
            Some(id) => id.to_string(),
            None => "none".to_string(),
        };
        let mut pairs: Vec<(&str, String)> = vec![
            ("vocab_size", m.vocab_size.to_string()),
            ("d_model", m.d_model.to_string()),
            ("n_layers", m.n_layers.to_string()),
            ("n_heads", m.n_heads.to_string()),
            ("rotary_dim", m.rotary_dim.to_string()),
            ("max_seq_len", m.max_seq_len.to_string()),
            ("tie_embeddings", m.tie_embeddings.to_string()),
            ("rotary_base", format!("{:?}", m.rotary_base)),
            ("ln_eps", format!("{:?}", m.ln_eps)),
            ("init_std", format!("{:?}", m.init_std)),
            ("total_steps", t.total_steps.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("seq_len", t.seq_len.to_string()),
            ("warmup_steps", t.warmup_steps.to_string()),
            ("lr_max", format!("{:?}", t.lr_max)),
            ("lr_min", format!("{:?}", t.lr_min)),
            ("beta1", format!("{:?}", t.beta1)),
            ("beta2", format!("{:?}", t.beta2)),
            ("adam_eps", format!("{:?}", t.adam_eps)),
            ("weight_decay", format!("{:?}", t.weight_decay)),
            ("clip_norm", format!("{:?}", t.clip_norm)),
            ("ema_alpha", format!("{:?}", t.ema_alpha)),
            ("log_every", t.log_every.to_string()),
            ("checkpoint_every", t.checkpoint_every.to_string()),
            ("pad_id", pad),
            ("seed", t.seed.to_string()),
        ];
        pairs.sort_by_key(|(k, _)| *k);
        let mut out = String::new();
        for (k, v) in pairs {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }
}
