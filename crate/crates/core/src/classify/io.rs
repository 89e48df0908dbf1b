//! JSONL interchange for classification tasks.
//!
//! - Labeled data: one `{"text": ..., "label": ...}` object per line.
//! - Multiple choice: one `{"context": ..., "choices": [...5...], "answer": N}`
//!   object per line.
//! - Labels manifest: one label per line, order defining the candidate order.
//!
//! Malformed lines abort with the path and 1-based line number; silently
//! skipping labeled data would corrupt every downstream metric.

use std::path::Path;

use super::{ClassifyError, LabeledExample, MultipleChoiceExample};

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> ClassifyError {
    ClassifyError::Format {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Load `{"text", "label"}` records from a JSONL file.
pub fn load_labeled(path: &Path) -> Result<Vec<LabeledExample>, ClassifyError> {
    let raw = std::fs::read_to_string(path)?;
    let mut examples = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let example: LabeledExample = serde_json::from_str(line)
            .map_err(|e| format_err(path, i + 1, e.to_string()))?;
        if example.label.is_empty() {
            return Err(format_err(path, i + 1, "empty label"));
        }
        examples.push(example);
    }
    if examples.is_empty() {
        return Err(format_err(path, 0, "no examples in file"));
    }
    Ok(examples)
}

/// Load `{"context", "choices", "answer"}` records from a JSONL file,
/// validating the five-distinct-choices shape per record.
pub fn load_multiple_choice(path: &Path) -> Result<Vec<MultipleChoiceExample>, ClassifyError> {
    let raw = std::fs::read_to_string(path)?;
    let mut examples = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let example: MultipleChoiceExample = serde_json::from_str(line)
            .map_err(|e| format_err(path, i + 1, e.to_string()))?;
        example
            .validate()
            .map_err(|e| format_err(path, i + 1, e.to_string()))?;
        examples.push(example);
    }
    if examples.is_empty() {
        return Err(format_err(path, 0, "no examples in file"));
    }
    Ok(examples)
}

/// Load prediction inputs: JSONL records carrying at least a `"text"` key
/// (a `"label"` key, when present, is ignored — prediction does not peek).
pub fn load_texts(path: &Path) -> Result<Vec<String>, ClassifyError> {
    let raw = std::fs::read_to_string(path)?;
    let mut texts = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| format_err(path, i + 1, e.to_string()))?;
        let text = value
            .get("text")
            .and_then(|t| t.as_str())
            .ok_or_else(|| format_err(path, i + 1, "missing string field \"text\""))?;
        texts.push(text.to_string());
    }
    if texts.is_empty() {
        return Err(format_err(path, 0, "no examples in file"));
    }
    Ok(texts)
}

/// Load multiple-choice prediction inputs: JSONL records with `"context"`
/// and five distinct `"choices"`; an `"answer"` key, when present, is
/// ignored.
pub fn load_choice_sets(path: &Path) -> Result<Vec<(String, Vec<String>)>, ClassifyError> {
    let raw = std::fs::read_to_string(path)?;
    let mut sets = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| format_err(path, i + 1, e.to_string()))?;
        let context = value
            .get("context")
            .and_then(|c| c.as_str())
            .ok_or_else(|| format_err(path, i + 1, "missing string field \"context\""))?
            .to_string();
        let choices: Vec<String> = value
            .get("choices")
            .and_then(|c| c.as_array())
            .map(|a| {
                a.iter()
                    .filter_map(|v| v.as_str().map(str::to_string))
                    .collect()
            })
            .ok_or_else(|| format_err(path, i + 1, "missing array field \"choices\""))?;
        let probe = MultipleChoiceExample {
            context: context.clone(),
            choices: choices.clone(),
            answer: 0,
        };
        probe
            .validate()
            .map_err(|e| format_err(path, i + 1, e.to_string()))?;
        sets.push((context, choices));
    }
    if sets.is_empty() {
        return Err(format_err(path, 0, "no examples in file"));
    }
    Ok(sets)
}

/// Load a labels manifest: one label per line, blank lines ignored,
/// order preserved.
pub fn load_labels(path: &Path) -> Result<Vec<String>, ClassifyError> {
    let raw = std::fs::read_to_string(path)?;
    let labels: Vec<String> = raw
        .lines()
        .map(str::trim_end)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if labels.is_empty() {
        return Err(format_err(path, 0, "no labels in manifest"));
    }
    Ok(labels)
}

/// Serialize one prediction as a JSON line:
/// `{"predicted": ..., "scores": {label: score, ...}}` with scores in
/// candidate order.
pub fn prediction_record(predicted: &str, labels: &[String], scores: &[f64]) -> String {
    assert_eq!(labels.len(), scores.len());
    let mut score_map = serde_json::Map::new();
    for (label, &score) in labels.iter().zip(scores) {
        score_map.insert(label.clone(), serde_json::json!(score));
    }
    serde_json::json!({
        "predicted": predicted,
        "scores": score_map,
    })
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labeled_jsonl_round_trips_and_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.jsonl");
        std::fs::write(
            &path,
            "{\"text\": \"hello\", \"label\": \"A\"}\n\n{\"text\": \"bye\", \"label\": \"B\"}\n",
        )
        .unwrap();
        let examples = load_labeled(&path).unwrap();
        assert_eq!(examples.len(), 2);
        assert_eq!(examples[0].text, "hello");
        assert_eq!(examples[1].label, "B");

        std::fs::write(&path, "{\"text\": \"hello\", \"label\": \"A\"}\nnot json\n").unwrap();
        let e = load_labeled(&path).unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");

        std::fs::write(&path, "{\"text\": \"x\"}\n").unwrap();
        let e = load_labeled(&path).unwrap_err();
        assert!(e.to_string().contains("line 1"), "{e}");
    }

    #[test]
    fn multiple_choice_jsonl_validates_shape_per_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mc.jsonl");
        let good = serde_json::json!({
            "context": "ctx",
            "choices": ["a", "b", "c", "d", "e"],
            "answer": 3,
        });
        std::fs::write(&path, format!("{good}\n")).unwrap();
        let examples = load_multiple_choice(&path).unwrap();
        assert_eq!(examples[0].answer, 3);

        let bad = serde_json::json!({
            "context": "ctx",
            "choices": ["a", "b", "c", "d"],
            "answer": 0,
        });
        std::fs::write(&path, format!("{good}\n{bad}\n")).unwrap();
        let e = load_multiple_choice(&path).unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn prediction_inputs_tolerate_extra_keys_but_not_missing_ones() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("texts.jsonl");
        std::fs::write(
            &path,
            "{\"text\": \"a\", \"label\": \"ignored\"}\n{\"text\": \"b\"}\n",
        )
        .unwrap();
        assert_eq!(load_texts(&path).unwrap(), ["a", "b"]);
        std::fs::write(&path, "{\"label\": \"only\"}\n").unwrap();
        let e = load_texts(&path).unwrap_err();
        assert!(e.to_string().contains("line 1"), "{e}");

        let mc = dir.path().join("mc.jsonl");
        let with_answer = serde_json::json!({
            "context": "ctx",
            "choices": ["a", "b", "c", "d", "e"],
            "answer": 4,
        });
        let without_answer = serde_json::json!({
            "context": "ctx2",
            "choices": ["f", "g", "h", "i", "j"],
        });
        std::fs::write(&mc, format!("{with_answer}\n{without_answer}\n")).unwrap();
        let sets = load_choice_sets(&mc).unwrap();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[1].0, "ctx2");
        assert_eq!(sets[1].1.len(), 5);

        let four = serde_json::json!({"context": "c", "choices": ["a", "b", "c", "d"]});
        std::fs::write(&mc, format!("{four}\n")).unwrap();
        assert!(load_choice_sets(&mc).is_err());
    }

    #[test]
    fn labels_manifest_preserves_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.txt");
        std::fs::write(&path, "zeta\nalpha\n\nmid\n").unwrap();
        assert_eq!(load_labels(&path).unwrap(), ["zeta", "alpha", "mid"]);
        std::fs::write(&path, "\n\n").unwrap();
        assert!(load_labels(&path).is_err());
    }

    #[test]
    fn prediction_records_are_single_json_lines() {
        let labels = vec!["A".to_string(), "B".to_string()];
        let line = prediction_record("B", &labels, &[-1.5, -0.25]);
        let value: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(value["predicted"], "B");
        assert_eq!(value["scores"]["A"], -1.5);
        assert_eq!(value["scores"]["B"], -0.25);
        assert!(!line.contains('\n'));
    }
}
