//! Benchmark report files.
//!
//! A report file is the EvalReport plus run metadata (what model, what data,
//! when) and a fixed `published_reference` block quoting the full-scale
//! results this recipe reached on TPU-scale hardware — included so a
//! desk-scale score is never mistaken for a reproduction of those numbers.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::ModelConfig;
use crate::util::fnv1a;

use super::EvalReport;

/// One published full-scale result, quoted for context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceResult {
    pub task: String,
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub micro_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
}

/// The published full-scale numbers, with the caveat that makes them
/// non-targets for this implementation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedReference {
    pub note: String,
    pub results: Vec<ReferenceResult>,
}

/// Reference block embedded in every report file.
pub const PUBLISHED_REFERENCE: fn() -> PublishedReference = || PublishedReference {
    note: "Published full-scale results for this training recipe, from 350000-step \
           accelerator runs over billions of tokens. They are context, not targets: \
           desk-scale models cannot reproduce them and scores in this report must \
           not be compared against them."
        .to_string(),
    results: vec![
        ReferenceResult {
            task: "LEDGAR (100-class single-label)".into(),
            model: "456M".into(),
            micro_f1: Some(0.835),
            macro_f1: Some(0.724),
            accuracy: None,
        },
        ReferenceResult {
            task: "LEDGAR (100-class single-label)".into(),
            model: "1.6B".into(),
            micro_f1: Some(0.839),
            macro_f1: Some(0.740),
            accuracy: None,
        },
        ReferenceResult {
            task: "CaseHOLD (five-choice, binary reduction)".into(),
            model: "456M".into(),
            micro_f1: None,
            macro_f1: None,
            accuracy: Some(0.496),
        },
        ReferenceResult {
            task: "CaseHOLD (five-choice, binary reduction)".into(),
            model: "1.6B".into(),
            micro_f1: None,
            macro_f1: None,
            accuracy: Some(0.276),
        },
    ],
};

/// Provenance of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    /// FNV-1a digest of the model configuration JSON, hex.
    pub model_config_digest: String,
    /// FNV-1a digest of the evaluated dataset file, hex.
    pub dataset_digest: String,
    /// Unix seconds; honors `SOURCE_DATE_EPOCH` for reproducible output.
    pub timestamp_unix: u64,
}

impl RunMetadata {
    pub fn collect(model_config: &ModelConfig, dataset_digest: u64) -> Self {
        let config_json =
            serde_json::to_vec(model_config).expect("model config serializes infallibly");
        Self {
            model_config_digest: format!("{:016x}", fnv1a(&config_json)),
            dataset_digest: format!("{dataset_digest:016x}"),
            timestamp_unix: timestamp(),
        }
    }
}

/// Current Unix time, overridable through `SOURCE_DATE_EPOCH` so report
/// files can be byte-identical across reruns.
pub fn timestamp() -> u64 {
    if let Ok(raw) = std::env::var("SOURCE_DATE_EPOCH") {
        if let Ok(v) = raw.parse() {
            return v;
        }
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// The on-disk report: results + provenance + published context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub report: EvalReport,
    pub metadata: RunMetadata,
    pub published_reference: PublishedReference,
}

/// Write the report as pretty-printed JSON.
pub fn write_report(
    path: &Path,
    report: &EvalReport,
    metadata: &RunMetadata,
) -> std::io::Result<()> {
    let file = ReportFile {
        report: report.clone(),
        metadata: metadata.clone(),
        published_reference: PUBLISHED_REFERENCE(),
    };
    let mut json = serde_json::to_string_pretty(&file).expect("report serializes infallibly");
    json.push('\n');
    std::fs::write(path, json)
}
