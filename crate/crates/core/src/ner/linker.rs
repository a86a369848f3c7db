use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::matcher::{detect_spans, Candidate};
use super::model::{cosine, ContextModel};
use super::tokenize::{tokenize, Token};
use crate::taxonomy::{CodeId, ConceptDictionary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanStatus {
    Unambiguous,
    Disambiguated,
    Rejected,
}

/// A recognised mention linked to exactly one concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub token_range: Range<usize>,
    pub concept_id: String,
    /// Codes of the linked concept; empty for rejected spans.
    pub codes: Vec<CodeId>,
    pub confidence: f64,
    pub status: SpanStatus,
}

impl EntitySpan {
    pub fn is_accepted(&self) -> bool {
        self.status != SpanStatus::Rejected
    }
}

/// Chooses among `candidate.concepts` by cosine similarity between each
/// concept vector and `context`. Concepts without a vector are skipped; equal
/// scores resolve to the smaller concept id.
pub fn disambiguate(
    candidate: &Candidate,
    context: &[f32],
    model: &ContextModel,
    dict: &ConceptDictionary,
    text: &str,
) -> EntitySpan {
    let mut best: Option<(&str, f64)> = None;
    for concept_id in &candidate.concepts {
        let Some(vector) = model.concept_vector(concept_id) else {
            continue;
        };
        let sim = cosine(vector, context);
        if best.is_none_or(|(_, s)| sim > s) {
            best = Some((concept_id, sim));
        }
    }
    let threshold = f64::from(model.similarity_threshold());
    let (concept_id, status, confidence) = match best {
        Some((id, sim)) if sim >= threshold => (id, SpanStatus::Disambiguated, (sim + 1.0) / 2.0),
        Some((id, sim)) => (id, SpanStatus::Rejected, (sim + 1.0) / 2.0),
        None => ("", SpanStatus::Rejected, 0.0),
    };
    let codes = match status {
        SpanStatus::Rejected => Vec::new(),
        _ => concept_codes(dict, concept_id),
    };
    EntitySpan {
        start: candidate.start,
        end: candidate.end,
        surface: text[candidate.start..candidate.end].to_string(),
        token_range: candidate.token_range.clone(),
        concept_id: concept_id.to_string(),
        codes,
        confidence,
        status,
    }
}

fn concept_codes(dict: &ConceptDictionary, concept_id: &str) -> Vec<CodeId> {
    dict.concept(concept_id)
        .map(|c| c.codes.iter().cloned().collect())
        .unwrap_or_default()
}

/// Resolves every candidate, including rejected ones.
pub fn link_candidates(
    text: &str,
    tokens: &[Token],
    candidates: &[Candidate],
    dict: &ConceptDictionary,
    model: &ContextModel,
) -> Vec<EntitySpan> {
    candidates
        .iter()
        .map(|c| {
            if c.is_unambiguous() {
                let concept_id = c.concepts.iter().next().expect("candidates carry a concept");
                EntitySpan {
                    start: c.start,
                    end: c.end,
                    surface: text[c.start..c.end].to_string(),
                    token_range: c.token_range.clone(),
                    concept_id: concept_id.clone(),
                    codes: concept_codes(dict, concept_id),
                    confidence: 1.0,
                    status: SpanStatus::Unambiguous,
                }
            } else {
                let context = model.embed_context(tokens, c.token_range.clone());
                disambiguate(c, &context, model, dict, text)
            }
        })
        .collect()
}

/// Tokenise, match and disambiguate; returns accepted spans in text order.
pub fn annotate_document(text: &str, dict: &ConceptDictionary, model: &ContextModel) -> Vec<EntitySpan> {
    let tokens = tokenize(text);
    let candidates = detect_spans(&tokens, dict);
    link_candidates(text, &tokens, &candidates, dict, model)
        .into_iter()
        .filter(EntitySpan::is_accepted)
        .collect()
}
