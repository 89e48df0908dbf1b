//! Constrained label prediction.
//!
//! Every candidate label is scored as a continuation of the same prompt
//! (`text′ <|label|>`), so prediction can only ever emit a label from the
//! candidate set — free-running generation is never involved.

use crate::model::Model;
use crate::tensor::Scalar;
use crate::tokenizer::TokenizerModel;

use super::{format_prompt, ClassifyError, LabelSet, CHOICE_FALSE, CHOICE_TRUE};

/// How a candidate's summed continuation log-probability is normalized
/// before comparison. Mean-per-token is the default: it removes the length
/// penalty that would otherwise bias selection toward short labels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreNorm {
    #[default]
    MeanLogProb,
    SumLogProb,
}

/// Score `text` against every label in the set and return
/// `(winning index, per-label scores in candidate order)`.
///
/// All candidates share one prompt, truncated with room reserved for the
/// longest label so the comparison is over identical context. Ties resolve
/// to the lowest candidate index.
pub fn predict_label<S: Scalar>(
    model: &Model<S>,
    tokenizer: &TokenizerModel,
    text: &str,
    labels: &LabelSet,
    norm: ScoreNorm,
) -> Result<(usize, Vec<f64>), ClassifyError> {
    let seq_len = model.config.max_seq_len;
    let prompt = format_prompt(tokenizer, text, labels.max_token_len(), seq_len)?;
    let mut scores = Vec::with_capacity(labels.len());
    for i in 0..labels.len() {
        let label_ids = labels.token_ids(i);
        let mut ids = prompt.clone();
        ids.extend_from_slice(label_ids);
        let total = model.continuation_log_prob(&ids, prompt.len())?;
        let score = match norm {
            ScoreNorm::MeanLogProb => total / label_ids.len() as f64,
            ScoreNorm::SumLogProb => total,
        };
        scores.push(score);
    }
    let mut best = 0;
    for (i, &score) in scores.iter().enumerate().skip(1) {
        if score > scores[best] {
            best = i;
        }
    }
    Ok((best, scores))
}

/// Numerically stable `1 / (1 + exp(x))`.
fn sigmoid_neg(x: f64) -> f64 {
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Answer a five-way multiple-choice question through its binary reduction.
///
/// Each choice `i` is scored independently as the binary instance
/// `context ++ " " ++ choices[i]` with candidates `True`/`False`, giving
/// `p_i = 1 / (1 + exp(s_false − s_true))` — the probability the model
/// assigns to that choice being the holding. The answer is the arg-max of
/// `p_i`; ties resolve to the lowest choice index. Returns
/// `(winning index, [p_0..p_4])`.
pub fn predict_choice<S: Scalar>(
    model: &Model<S>,
    tokenizer: &TokenizerModel,
    context: &str,
    choices: &[String],
    norm: ScoreNorm,
) -> Result<(usize, Vec<f64>), ClassifyError> {
    let binary = LabelSet::new(
        vec![CHOICE_TRUE.to_string(), CHOICE_FALSE.to_string()],
        tokenizer,
    )?;
    let mut probs = Vec::with_capacity(choices.len());
    for choice in choices {
        let text = format!("{context} {choice}");
        let (_, scores) = predict_label(model, tokenizer, &text, &binary, norm)?;
        let (s_true, s_false) = (scores[0], scores[1]);
        probs.push(sigmoid_neg(s_false - s_true));
    }
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    Ok((best, probs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::tests::test_tokenizer;
    use crate::model::{Model, ModelConfig};

    fn flat_model(tokenizer: &TokenizerModel) -> Model<f32> {
        // Zeroed parameters give exactly uniform logits: every candidate is
        // tied, so selection must fall through to the tie-break rule.
        let config = ModelConfig {
            vocab_size: tokenizer.vocab_size(),
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            rotary_dim: 4,
            max_seq_len: 64,
            tie_embeddings: false,
            rotary_base: 10000.0,
            ln_eps: 1e-5,
            init_std: 0.02,
        };
        let mut model = Model::new(config, 0);
        let names: Vec<String> = model.params.iter().map(|(n, _)| n.to_string()).collect();
        for name in &names {
            let shape = model.params.get(name).shape().to_vec();
            let len: usize = shape.iter().product();
            model
                .params
                .set(name, crate::tensor::Tensor::new(shape, vec![0.0f32; len]));
        }
        model
    }

    #[test]
    fn every_prediction_is_a_candidate_label() {
        let tok = test_tokenizer();
        let model = flat_model(&tok);
        let labels = LabelSet::new(vec!["alpha".into(), "beta".into()], &tok).unwrap();
        let (best, scores) =
            predict_label(&model, &tok, "the alpha wolf", &labels, ScoreNorm::MeanLogProb)
                .unwrap();
        assert!(best < labels.len());
        assert_eq!(scores.len(), 2);
        assert!(scores.iter().all(|s| s.is_finite() && *s < 0.0));
    }

    #[test]
    fn exact_ties_resolve_to_the_lowest_index() {
        let tok = test_tokenizer();
        let model = flat_model(&tok);
        // Uniform logits + equal label token counts ⇒ exactly equal scores.
        let labels = LabelSet::new(vec!["A".into(), "B".into()], &tok).unwrap();
        assert_eq!(tok.encode("A").len(), tok.encode("B").len());
        let (best, scores) =
            predict_label(&model, &tok, "hello", &labels, ScoreNorm::MeanLogProb).unwrap();
        assert_eq!(scores[0], scores[1], "zeroed model must tie exactly");
        assert_eq!(best, 0, "ties must go to the lowest candidate index");
    }

    #[test]
    fn singleton_label_set_is_total() {
        let tok = test_tokenizer();
        let model = flat_model(&tok);
        let labels = LabelSet::new(vec!["A".into()], &tok).unwrap();
        let (best, _) =
            predict_label(&model, &tok, "anything", &labels, ScoreNorm::SumLogProb).unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn sum_and_mean_norms_agree_for_single_token_labels() {
        let tok = test_tokenizer();
        let model = flat_model(&tok);
        let labels = LabelSet::new(vec!["A".into(), "B".into()], &tok).unwrap();
        assert_eq!(labels.max_token_len(), 1);
        let (_, mean) =
            predict_label(&model, &tok, "hello", &labels, ScoreNorm::MeanLogProb).unwrap();
        let (_, sum) =
            predict_label(&model, &tok, "hello", &labels, ScoreNorm::SumLogProb).unwrap();
        assert_eq!(mean, sum);
    }

    #[test]
    fn choice_probabilities_are_independent_of_other_choices() {
        let tok = test_tokenizer();
        let model = flat_model(&tok);
        let mut choices: Vec<String> = vec![
            "leads the pack".into(),
            "sleeps all day".into(),
            "hunts alone".into(),
            "howls at night".into(),
            "rests by the den".into(),
        ];
        let (_, probs_a) =
            predict_choice(&model, &tok, "the wolf", &choices, ScoreNorm::MeanLogProb).unwrap();
        // Editing choice 4 must not move p_0..p_3: each binary instance is
        // scored in isolation (no softmax across choices).
        choices[4] = "swims across the river".into();
        let (_, probs_b) =
            predict_choice(&model, &tok, "the wolf", &choices, ScoreNorm::MeanLogProb).unwrap();
        assert_eq!(&probs_a[..4], &probs_b[..4]);
        for &p in &probs_a {
            assert!(p.is_finite() && (0.0..=1.0).contains(&p), "p = {p}");
        }
    }

    #[test]
    fn uniform_model_ties_choices_to_the_first() {
        let tok = test_tokenizer();
        let model = flat_model(&tok);
        // Identical choice texts score identically; arg-max must stay at 0.
        let choices: Vec<String> = (0..5).map(|_| "same words".to_string()).collect();
        let (best, probs) =
            predict_choice(&model, &tok, "ctx", &choices, ScoreNorm::MeanLogProb).unwrap();
        assert_eq!(best, 0);
        assert!(probs.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn stable_sigmoid_handles_extreme_gaps() {
        assert_eq!(sigmoid_neg(0.0), 0.5);
        assert!((sigmoid_neg(-800.0) - 1.0).abs() < 1e-15);
        assert!(sigmoid_neg(800.0) >= 0.0 && sigmoid_neg(800.0) < 1e-300);
        let p = sigmoid_neg(3.0);
        let q = 1.0 / (1.0 + 3.0f64.exp());
        assert!((p - q).abs() < 1e-15);
    }
}
