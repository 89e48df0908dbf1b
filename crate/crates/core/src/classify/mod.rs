//! Text classification with an unmodified language model.
//!
//! Labeled data is rendered as plain token sequences —
//! `(text)<|label|>(label)<|endoftext|>` — and fine-tuned with the stock
//! next-token objective; nothing is added to the architecture (no heads, no
//! masks, no new parameters). Prediction scores each candidate label as a
//! constrained continuation of `(text)<|label|>` and picks the best,
//! which always yields an in-vocabulary label. Five-way multiple choice
//! reduces to five independent binary (`True`/`False`) instances.

mod finetune;
mod io;
mod predict;

pub use finetune::{finetune_classifier, ExampleProvider};
pub use io::{
    load_choice_sets, load_labeled, load_labels, load_multiple_choice, load_texts,
    prediction_record,
};
pub use predict::{predict_choice, predict_label, ScoreNorm};

use std::collections::HashMap;
use std::path::PathBuf;

use crate::tensor::TensorError;
use crate::tokenizer::TokenizerModel;
use crate::trainer::TrainError;

/// Label strings used for the binary instances of multiple-choice tasks.
pub const CHOICE_TRUE: &str = "True";
pub const CHOICE_FALSE: &str = "False";

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{path}, line {line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("label set is empty")]
    EmptyLabelSet,
    #[error("duplicate label {label:?} in label set")]
    DuplicateLabel { label: String },
    #[error("label {label:?} tokenizes to nothing")]
    EmptyLabel { label: String },
    #[error(
        "label {label:?} needs {needed} tokens (tag + label + end tag), which cannot fit \
         in a {seq_len}-token sequence"
    )]
    LabelTooLong {
        label: String,
        needed: usize,
        seq_len: usize,
    },
    #[error("example {index}: label {label:?} is not in the label set")]
    UnknownLabel { index: usize, label: String },
    #[error("no examples to fine-tune on")]
    NoExamples,
    #[error("multiple-choice example must have exactly 5 distinct choices, got {got}")]
    BadChoices { got: String },
}

/// One classification example.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LabeledExample {
    pub text: String,
    pub label: String,
}

/// A five-way multiple-choice example.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MultipleChoiceExample {
    pub context: String,
    pub choices: Vec<String>,
    /// Index of the correct choice, 0–4.
    pub answer: usize,
}

impl MultipleChoiceExample {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        let distinct: std::collections::HashSet<&String> = self.choices.iter().collect();
        if self.choices.len() != 5 || distinct.len() != 5 {
            return Err(ClassifyError::BadChoices {
                got: format!("{} choices ({} distinct)", self.choices.len(), distinct.len()),
            });
        }
        if self.answer >= 5 {
            return Err(ClassifyError::BadChoices {
                got: format!("answer index {} out of range", self.answer),
            });
        }
        Ok(())
    }
}

/// The ordered candidate labels of a task, with their tokenizations cached.
/// Order comes from the labels manifest and is the tie-break authority:
/// equal scores resolve to the lower index.
#[derive(Debug, Clone)]
pub struct LabelSet {
    labels: Vec<String>,
    tokenized: Vec<Vec<u32>>,
    index: HashMap<String, usize>,
}

impl LabelSet {
    pub fn new(labels: Vec<String>, tokenizer: &TokenizerModel) -> Result<Self, ClassifyError> {
        if labels.is_empty() {
            return Err(ClassifyError::EmptyLabelSet);
        }
        let mut index = HashMap::new();
        let mut tokenized = Vec::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if index.insert(label.clone(), i).is_some() {
                return Err(ClassifyError::DuplicateLabel {
                    label: label.clone(),
                });
            }
            let ids = tokenizer.encode(label);
            if ids.is_empty() {
                return Err(ClassifyError::EmptyLabel {
                    label: label.clone(),
                });
            }
            tokenized.push(ids);
        }
        Ok(Self {
            labels,
            tokenized,
            index,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn token_ids(&self, i: usize) -> &[u32] {
        &self.tokenized[i]
    }

    /// Longest tokenized label, the reservation used when truncating
    /// prediction prompts so every candidate scores over the same prefix.
    pub fn max_token_len(&self) -> usize {
        self.tokenized.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Render one training sequence:
/// `encode(text′) ++ [label_tag] ++ encode(label) ++ [end_tag]`, where
/// `text′` keeps only the tail of the text — the head is dropped just enough
/// to fit `seq_len`. No whitespace is inserted around the tag. The sequence
/// always ends with the label ids and the end tag, whatever the truncation.
pub fn format_example(
    tokenizer: &TokenizerModel,
    example: &LabeledExample,
    seq_len: usize,
) -> Result<Vec<u32>, ClassifyError> {
    let label_ids = tokenizer.encode(&example.label);
    if label_ids.is_empty() {
        return Err(ClassifyError::EmptyLabel {
            label: example.label.clone(),
        });
    }
    let overhead = 1 + label_ids.len() + 1;
    if overhead > seq_len {
        return Err(ClassifyError::LabelTooLong {
            label: example.label.clone(),
            needed: overhead,
            seq_len,
        });
    }
    let text_ids = tokenizer.encode(&example.text);
    let keep = text_ids.len().min(seq_len - overhead);
    let mut ids = Vec::with_capacity(keep + overhead);
    ids.extend_from_slice(&text_ids[text_ids.len() - keep..]);
    ids.push(tokenizer.label_id());
    ids.extend_from_slice(&label_ids);
    ids.push(tokenizer.end_id());
    Ok(ids)
}

/// Render a prediction prompt: `encode(text′) ++ [label_tag]`, truncated by
/// the same rule as [`format_example`] with room reserved for
/// `reserve_label_tokens` label ids plus the end tag — so training and
/// inference see identical prefixes.
pub fn format_prompt(
    tokenizer: &TokenizerModel,
    text: &str,
    reserve_label_tokens: usize,
    seq_len: usize,
) -> Result<Vec<u32>, ClassifyError> {
    let overhead = 1 + reserve_label_tokens + 1;
    if overhead > seq_len {
        return Err(ClassifyError::LabelTooLong {
            label: format!("<{reserve_label_tokens}-token label>"),
            needed: overhead,
            seq_len,
        });
    }
    let text_ids = tokenizer.encode(text);
    let keep = text_ids.len().min(seq_len - overhead);
    let mut ids = Vec::with_capacity(keep + 1);
    ids.extend_from_slice(&text_ids[text_ids.len() - keep..]);
    ids.push(tokenizer.label_id());
    Ok(ids)
}

/// Expand a five-way multiple-choice example into five binary instances:
/// instance `i` pairs `context ++ " " ++ choices[i]` with label `"True"` when
/// `i` is the answer and `"False"` otherwise. Left-truncation later drops
/// the head of the context, never the choice at the tail.
pub fn convert_multiple_choice(
    example: &MultipleChoiceExample,
) -> Result<Vec<LabeledExample>, ClassifyError> {
    example.validate()?;
    Ok(example
        .choices
        .iter()
        .enumerate()
        .map(|(i, choice)| LabeledExample {
            text: format!("{} {}", example.context, choice),
            label: if i == example.answer {
                CHOICE_TRUE.to_string()
            } else {
                CHOICE_FALSE.to_string()
            },
        })
        .collect())
}
