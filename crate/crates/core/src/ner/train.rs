use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linker::annotate_document;
use super::matcher::detect_spans;
use super::model::ContextModel;
use super::tokenize::{tokenize, Token};
use crate::taxonomy::ConceptDictionary;

/// Counts of what a training pass touched.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainStats {
    pub documents: usize,
    pub word_updates: u64,
    pub concept_updates: u64,
    pub skipped_ambiguous: u64,
}

fn blend_toward(vector: &mut [f32], target: &[f32], rate: f32) {
    for (v, t) in vector.iter_mut().zip(target) {
        *v += rate * (t - *v);
    }
}

fn is_zero(v: &[f32]) -> bool {
    v.iter().all(|x| *x == 0.0)
}

/// Concept rate: a running mean until `1/(n+1)` falls below the base rate.
fn concept_rate(base: f32, prior_updates: u64) -> f32 {
    (1.0 / (prior_updates as f32 + 1.0)).max(base)
}

/// Word rate: `base / (1 + base·n)`.
fn word_rate(base: f32, prior_updates: u64) -> f32 {
    base / (1.0 + base * prior_updates as f32)
}

/// Self-supervised pass over `corpus`.
///
/// Every word is first nudged toward the mean of its window, then every
/// unambiguous dictionary hit pulls its concept vector toward the hit's
/// context embedding. Ambiguous hits are left for disambiguation and never
/// train a concept.
pub fn train_unsupervised<S: AsRef<str>>(
    corpus: &[S],
    dict: &ConceptDictionary,
    model: &mut ContextModel,
) -> TrainStats {
    let mut stats = TrainStats {
        documents: corpus.len(),
        ..TrainStats::default()
    };
    if corpus.is_empty() {
        return stats;
    }
    let base = model.config().learning_rate;
    let tokenized: Vec<Vec<Token>> = corpus.iter().map(|d| tokenize(d.as_ref())).collect();

    for tokens in &tokenized {
        for t in tokens.iter().filter(|t| t.is_word()) {
            model.ensure_word(&t.normalized);
        }
        for (i, t) in tokens.iter().enumerate() {
            if !t.is_word() {
                continue;
            }
            let ctx = model.embed_context(tokens, i..i + 1);
            if is_zero(&ctx) {
                continue;
            }
            let entry = model.words_mut().get_mut(&t.normalized).expect("ensured above");
            blend_toward(&mut entry.vector, &ctx, word_rate(base, entry.updates));
            entry.updates += 1;
            stats.word_updates += 1;
        }
    }

    for tokens in &tokenized {
        for cand in detect_spans(tokens, dict) {
            if !cand.is_unambiguous() {
                stats.skipped_ambiguous += 1;
                continue;
            }
            let ctx = model.embed_context(tokens, cand.token_range.clone());
            if is_zero(&ctx) {
                continue;
            }
            let concept_id = cand.concepts.iter().next().expect("non-empty");
            pull_concept(model, concept_id, &ctx, base);
            stats.concept_updates += 1;
        }
    }

    if stats.word_updates + stats.concept_updates > 0 {
        model.set_dictionary_hash(dict.version_hash());
        model.bump_version();
    }
    stats
}

fn pull_concept(model: &mut ContextModel, concept_id: &str, ctx: &[f32], base: f32) {
    let dim = ctx.len();
    let entry = model
        .concepts_mut()
        .entry(concept_id.to_string())
        .or_insert_with(|| super::model::Trained {
            vector: vec![0.0; dim],
            updates: 0,
        });
    let rate = concept_rate(base, entry.updates);
    blend_toward(&mut entry.vector, ctx, rate);
    entry.updates += 1;
}

fn push_concept(model: &mut ContextModel, concept_id: &str, ctx: &[f32], base: f32) -> bool {
    match model.concepts_mut().get_mut(concept_id) {
        Some(entry) => {
            blend_toward(&mut entry.vector, ctx, -base);
            entry.updates += 1;
            true
        }
        None => false,
    }
}

/// A human judgement of one span: either a model prediction marked
/// correct/incorrect or a newly added span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationExample {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub concept_id: String,
    pub correct: bool,
    pub annotator_id: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    /// Ratios with an empty denominator are reported as 0.
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Metrics {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            true_negatives: tn,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedAnnotation {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneReport {
    pub metrics: Metrics,
    pub train_examples: usize,
    pub test_examples: usize,
    pub synonyms_added: usize,
    pub rejected: Vec<RejectedAnnotation>,
}

/// Share of examples held out for evaluation.
pub const HOLDOUT_FRACTION: f64 = 0.2;

/// Seeded split of `n` items into (train, test) index lists, each ascending.
pub fn holdout_split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (n as f64 * HOLDOUT_FRACTION).round() as usize;
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

fn span_tokens(tokens: &[Token], start: usize, end: usize) -> std::ops::Range<usize> {
    let first = tokens.iter().position(|t| t.start >= start).unwrap_or(tokens.len());
    let last = tokens[first..]
        .iter()
        .position(|t| t.end > end)
        .map_or(tokens.len(), |p| first + p);
    first..last.max(first)
}

/// Applies human annotations to the dictionary and model.
///
/// Valid examples are split 80/20 under `seed`. Training examples marked
/// correct add their surface as a synonym and pull the concept vector toward
/// the span context; incorrect ones push it away. Held-out examples are then
/// scored: a held-out example counts as predicted when the tuned linker emits
/// a span with the same offsets and concept.
pub fn fine_tune(
    annotations: &[AnnotationExample],
    documents: &BTreeMap<String, String>,
    dict: &mut ConceptDictionary,
    model: &mut ContextModel,
    seed: u64,
) -> FineTuneReport {
    let mut rejected = Vec::new();
    let mut valid = Vec::new();
    for (index, a) in annotations.iter().enumerate() {
        let reason = if dict.concept(&a.concept_id).is_none() {
            Some(format!("unknown concept {:?}", a.concept_id))
        } else {
            match documents.get(&a.doc_id) {
                None => Some(format!("unknown document {:?}", a.doc_id)),
                Some(text) => match text.get(a.start..a.end) {
                    Some(s) if a.start < a.end && s == a.surface => None,
                    _ => Some(format!("span {}..{} does not match {:?}", a.start, a.end, a.surface)),
                },
            }
        };
        match reason {
            Some(reason) => rejected.push(RejectedAnnotation { index, reason }),
            None => valid.push(a),
        }
    }

    let (train, test) = holdout_split(valid.len(), seed);
    let base = model.config().learning_rate;
    let mut synonyms_added = 0;
    let mut changed = false;
    for &i in &train {
        let a = valid[i];
        let text = &documents[&a.doc_id];
        let tokens = tokenize(text);
        for t in tokens.iter().filter(|t| t.is_word()) {
            model.ensure_word(&t.normalized);
        }
        let range = span_tokens(&tokens, a.start, a.end);
        let ctx = model.embed_context(&tokens, range);
        if a.correct {
            if dict.add_synonym(&a.concept_id, &a.surface).unwrap_or(false) {
                synonyms_added += 1;
            }
            if !is_zero(&ctx) {
                pull_concept(model, &a.concept_id, &ctx, base);
            }
            changed = true;
        } else if !is_zero(&ctx) {
            changed |= push_concept(model, &a.concept_id, &ctx, base);
        }
    }
    if changed {
        model.set_dictionary_hash(dict.version_hash());
        model.bump_version();
    }

    let mut cache: HashMap<&str, Vec<super::EntitySpan>> = HashMap::new();
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for &i in &test {
        let a = valid[i];
        let spans = cache
            .entry(a.doc_id.as_str())
            .or_insert_with(|| annotate_document(&documents[&a.doc_id], dict, model));
        let predicted = spans
            .iter()
            .any(|s| s.start == a.start && s.end == a.end && s.concept_id == a.concept_id);
        match (a.correct, predicted) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
    }

    FineTuneReport {
        metrics: Metrics::from_counts(tp, fp, fn_, tn),
        train_examples: train.len(),
        test_examples: test.len(),
        synonyms_added,
        rejected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ner::{ModelConfig, SpanStatus};
    use crate::taxonomy::parse_code;

    fn dict() -> ConceptDictionary {
        let mut d = ConceptDictionary::new();
        d.insert_concept("HTN", "Hypertension", [parse_code("4019").unwrap()]).unwrap();
        d.insert_concept("CHF", "Congestive heart failure", [parse_code("4280").unwrap()]).unwrap();
        d
    }

    fn model() -> ContextModel {
        ContextModel::new(ModelConfig {
            dimension: 16,
            window: 3,
            ..ModelConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn empty_corpus_leaves_model_unchanged() {
        let mut m = model();
        let before = m.clone();
        let stats = train_unsupervised::<&str>(&[], &dict(), &mut m);
        assert_eq!(stats.concept_updates, 0);
        assert_eq!(m, before);
    }

    #[test]
    fn ambiguous_only_corpus_keeps_concepts_unset() {
        let mut d = dict();
        d.add_synonym("HTN", "BP").unwrap();
        let mut m = model();
        let stats = train_unsupervised(&["high BP noted today", "BP again"], &d, &mut m);
        assert_eq!(stats.concept_updates, 0);
        assert_eq!(stats.skipped_ambiguous, 2);
        assert!(m.concept_vector("HTN").is_none());
    }

    #[test]
    fn first_update_defines_concept_vector() {
        let mut m = model();
        train_unsupervised(&["long standing Hypertension treated with lisinopril"], &dict(), &mut m);
        assert_eq!(m.concept_updates("HTN"), 1);
        assert!(m.concept_vector("HTN").is_some());
        assert!(m.concept_vector("CHF").is_none());
        assert_eq!(m.dictionary_hash(), Some(dict().version_hash().as_str()));
        assert_eq!(m.version(), 1);
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = ["Hypertension with edema", "Congestive heart failure, Hypertension"];
        let mut a = model();
        let mut b = model();
        train_unsupervised(&corpus, &dict(), &mut a);
        train_unsupervised(&corpus, &dict(), &mut b);
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn rates() {
        assert_eq!(concept_rate(0.01, 0), 1.0);
        assert_eq!(concept_rate(0.01, 1), 0.5);
        assert_eq!(concept_rate(0.01, 1000), 0.01);
        assert!((word_rate(0.01, 100) - 0.005).abs() < 1e-7);
    }

    #[test]
    fn correct_annotation_adds_findable_synonym() {
        let text = "pt with poorly controlled htn on three agents";
        let docs = BTreeMap::from([("d1".to_string(), text.to_string())]);
        let start = text.find("htn").unwrap();
        let ann = AnnotationExample {
            doc_id: "d1".into(),
            start,
            end: start + 3,
            surface: "htn".into(),
            concept_id: "HTN".into(),
            correct: true,
            annotator_id: "a1".into(),
        };
        let mut d = dict();
        let mut m = model();
        let report = fine_tune(&[ann], &docs, &mut d, &mut m, 7);
        assert_eq!(report.train_examples, 1);
        assert_eq!(report.synonyms_added, 1);
        let spans = annotate_document(text, &d, &m);
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].concept_id, "HTN");
        assert_eq!(spans[0].status, SpanStatus::Disambiguated);
    }

    #[test]
    fn unknown_concept_reported_rest_processed() {
        let text = "Hypertension";
        let docs = BTreeMap::from([("d1".to_string(), text.to_string())]);
        let good = AnnotationExample {
            doc_id: "d1".into(),
            start: 0,
            end: 12,
            surface: text.into(),
            concept_id: "HTN".into(),
            correct: true,
            annotator_id: "a".into(),
        };
        let bad = AnnotationExample {
            concept_id: "NOPE".into(),
            ..good.clone()
        };
        let report = fine_tune(&[bad, good], &docs, &mut dict(), &mut model(), 1);
        assert_eq!(report.rejected.len(), 1);
        assert_eq!(report.rejected[0].index, 0);
        assert_eq!(report.train_examples + report.test_examples, 1);
    }

    #[test]
    fn metrics_from_counts() {
        let m = Metrics::from_counts(6, 2, 3, 9);
        assert!((m.precision - 0.75).abs() < 1e-12);
        assert!((m.recall - 6.0 / 9.0).abs() < 1e-12);
        assert!((m.f1 - 2.0 * 0.75 * (6.0 / 9.0) / (0.75 + 6.0 / 9.0)).abs() < 1e-12);
        assert_eq!(Metrics::from_counts(0, 0, 0, 4).f1, 0.0);
    }

    #[test]
    fn split_is_80_20_and_seeded() {
        let (train, test) = holdout_split(20, 3);
        assert_eq!((train.len(), test.len()), (16, 4));
        assert_eq!(holdout_split(20, 3), (train, test));
        assert_ne!(holdout_split(20, 3).1, holdout_split(20, 4).1);
    }
}
