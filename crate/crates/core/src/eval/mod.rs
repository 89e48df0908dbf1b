//! Classification metrics and benchmark reports.
//!
//! Metrics are computed from one confusion matrix (true × predicted counts):
//! accuracy as trace/total, micro-F1 over pooled TP/FP/FN, macro-F1 as the
//! unweighted mean of per-class F1 over the full label manifest. A class with
//! no support and no predictions contributes F1 = 0 to the macro mean — the
//! same convention as the LexGLUE tooling the reference results came from.

mod metrics;
mod report;

pub use metrics::{accuracy, confusion_matrix, macro_f1, micro_f1, per_class_metrics};
pub use report::{
    timestamp, write_report, PublishedReference, ReportFile, RunMetadata, PUBLISHED_REFERENCE,
};

use serde::{Deserialize, Serialize};

use crate::classify::{
    predict_choice, predict_label, ClassifyError, LabelSet, LabeledExample,
    MultipleChoiceExample, ScoreNorm,
};
use crate::model::Model;
use crate::tensor::Scalar;
use crate::tokenizer::TokenizerModel;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("example {index}: {source}")]
    Example {
        index: usize,
        source: ClassifyError,
    },
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-class precision/recall/F1 with the class's gold-example count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Full evaluation result over one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_examples: usize,
    pub accuracy: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub labels: Vec<String>,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[t][p]` counts examples with gold class `t` predicted as `p`.
    pub confusion: Vec<Vec<u64>>,
}

impl EvalReport {
    /// Assemble a report from `(gold, predicted)` index pairs over `labels`.
    pub fn from_pairs(pairs: &[(usize, usize)], labels: &[String]) -> Result<Self, EvalError> {
        if pairs.is_empty() {
            return Err(EvalError::EmptyDataset);
        }
        let confusion = confusion_matrix(pairs, labels.len());
        let per_class = per_class_metrics(&confusion)
            .into_iter()
            .zip(labels)
            .map(|((precision, recall, f1, support), label)| ClassMetrics {
                label: label.clone(),
                precision,
                recall,
                f1,
                support,
            })
            .collect();
        Ok(Self {
            n_examples: pairs.len(),
            accuracy: accuracy(pairs),
            micro_f1: micro_f1(pairs, labels.len()),
            macro_f1: macro_f1(pairs, labels.len()),
            labels: labels.to_vec(),
            per_class,
            confusion,
        })
    }
}

/// Evaluate a single-label classifier: predict every example against the
/// label manifest and score against the gold labels. Gold labels outside the
/// manifest, and any prediction failure, abort with the example's index
/// (line `index + 1` of a JSONL dataset).
pub fn evaluate_single_label<S: Scalar>(
    model: &Model<S>,
    tokenizer: &TokenizerModel,
    examples: &[LabeledExample],
    labels: &LabelSet,
    norm: ScoreNorm,
) -> Result<EvalReport, EvalError> {
    if examples.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut pairs = Vec::with_capacity(examples.len());
    for (index, example) in examples.iter().enumerate() {
        let gold = labels.position(&example.label).ok_or_else(|| EvalError::Example {
            index,
            source: ClassifyError::UnknownLabel {
                index,
                label: example.label.clone(),
            },
        })?;
        let (predicted, _) = predict_label(model, tokenizer, &example.text, labels, norm)
            .map_err(|source| EvalError::Example { index, source })?;
        pairs.push((gold, predicted));
    }
    EvalReport::from_pairs(&pairs, labels.labels())
}

/// Evaluate five-way multiple choice through the binary reduction: each
/// example's predicted choice is the arg-max of the five independent
/// True-probabilities. Classes in the report are the choice positions.
pub fn evaluate_multiple_choice<S: Scalar>(
    model: &Model<S>,
    tokenizer: &TokenizerModel,
    examples: &[MultipleChoiceExample],
    norm: ScoreNorm,
) -> Result<EvalReport, EvalError> {
    if examples.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut pairs = Vec::with_capacity(examples.len());
    for (index, example) in examples.iter().enumerate() {
        example
            .validate()
            .map_err(|source| EvalError::Example { index, source })?;
        let (predicted, _) =
            predict_choice(model, tokenizer, &example.context, &example.choices, norm)
                .map_err(|source| EvalError::Example { index, source })?;
        pairs.push((example.answer, predicted));
    }
    let labels: Vec<String> = (0..5).map(|i| format!("choice_{i}")).collect();
    EvalReport::from_pairs(&pairs, &labels)
}
