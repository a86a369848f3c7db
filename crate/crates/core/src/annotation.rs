//! Human validation of reconciled codes: sampling, marks, agreement and the
//! resulting exclusion list.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audit::{Bucket, PartitionRecord};
use crate::error::{Error, Result};
use crate::ner::{derive_seed, AnnotationExample};
use crate::stats::cohens_kappa;
use crate::taxonomy::{CodeId, ConceptDictionary};

pub const DEFAULT_PER_CODE_CAP: usize = 10;
pub const DEFAULT_EXCLUDE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dataset {
    #[serde(rename = "P_A")]
    PredictedAssigned,
    #[serde(rename = "P_NA")]
    PredictedNotAssigned,
    #[serde(rename = "A_NP-review")]
    MissingPredictionReview,
}

impl Dataset {
    pub fn as_str(self) -> &'static str {
        match self {
            Dataset::PredictedAssigned => "P_A",
            Dataset::PredictedNotAssigned => "P_NA",
            Dataset::MissingPredictionReview => "A_NP-review",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "P_A" => Some(Dataset::PredictedAssigned),
            "P_NA" => Some(Dataset::PredictedNotAssigned),
            "A_NP-review" | "A_NP" => Some(Dataset::MissingPredictionReview),
            _ => None,
        }
    }

    pub fn bucket(self) -> Bucket {
        match self {
            Dataset::PredictedAssigned => Bucket::PredictedAssigned,
            Dataset::PredictedNotAssigned => Bucket::PredictedNotAssigned,
            Dataset::MissingPredictionReview => Bucket::AssignedNotPredicted,
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Span offsets are byte offsets into the task excerpt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpan {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationTask {
    pub task_id: String,
    pub dataset: Dataset,
    pub admission_id: String,
    /// Discharge-diagnosis body of the admission.
    pub excerpt: String,
    pub span: Option<TaskSpan>,
    pub concept_id: Option<String>,
    pub code: CodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mark {
    Correct,
    Incorrect,
    Skipped,
}

/// Lookup tables used to build task excerpts.
#[derive(Debug, Clone, Copy)]
pub struct TaskContext<'a> {
    /// Discharge-diagnosis body per admission.
    pub documents: &'a BTreeMap<String, String>,
    /// Proposed concept per code.
    pub code_concepts: &'a BTreeMap<CodeId, String>,
}

/// First concept id (in id order) for every code of the dictionary.
pub fn concepts_by_code(dict: &ConceptDictionary) -> BTreeMap<CodeId, String> {
    let mut out = BTreeMap::new();
    for concept in dict.concepts() {
        for code in &concept.codes {
            out.entry(code.clone()).or_insert_with(|| concept.concept_id.clone());
        }
    }
    out
}

pub fn task_id(dataset: Dataset, admission_id: &str, code: &CodeId) -> String {
    format!("{}:{}:{}", dataset.as_str(), admission_id, code.canonical())
}

/// Samples up to `per_code_cap` records per code without replacement. Each
/// code draws from its own seeded stream; tasks are ordered by code, then
/// admission.
pub fn sample_tasks(
    records: &[PartitionRecord],
    dataset: Dataset,
    per_code_cap: usize,
    seed: u64,
    ctx: TaskContext<'_>,
) -> Vec<ValidationTask> {
    let mut by_code: BTreeMap<&CodeId, Vec<&PartitionRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.bucket == dataset.bucket()) {
        by_code.entry(&r.code).or_default().push(r);
    }
    let mut tasks = Vec::new();
    for (code, mut group) in by_code {
        group.sort_by(|a, b| a.admission_id.cmp(&b.admission_id));
        let label = format!("sample:{}:{}", dataset.as_str(), code.canonical());
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &label));
        let mut picked: Vec<&PartitionRecord> = group.choose_multiple(&mut rng, per_code_cap).copied().collect();
        picked.sort_by(|a, b| a.admission_id.cmp(&b.admission_id));
        for r in picked {
            let excerpt = ctx.documents.get(&r.admission_id).cloned().unwrap_or_default();
            let span = r
                .evidence
                .as_ref()
                .filter(|e| excerpt.get(e.start..e.end) == Some(e.text.as_str()))
                .map(|e| TaskSpan {
                    start: e.start,
                    end: e.end,
                    text: e.text.clone(),
                });
            tasks.push(ValidationTask {
                task_id: task_id(dataset, &r.admission_id, code),
                dataset,
                admission_id: r.admission_id.clone(),
                excerpt,
                span,
                concept_id: ctx.code_concepts.get(code).cloned(),
                code: code.clone(),
            });
        }
    }
    tasks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSession {
    pub session_id: String,
    pub annotator_id: String,
    pub dataset: Dataset,
    pub per_code_cap: usize,
    pub seed: u64,
    pub tasks: Vec<ValidationTask>,
    pub marks: BTreeMap<String, Mark>,
    pub annotations: Vec<AnnotationExample>,
    pub finalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRequest {
    pub session_id: String,
    pub annotator_id: String,
    pub dataset: Dataset,
    pub per_code_cap: usize,
    pub seed: u64,
}

/// Opens a session over a fresh sample of `records`. An empty dataset gives a
/// session without tasks.
pub fn create_session(request: SessionRequest, records: &[PartitionRecord], ctx: TaskContext<'_>) -> ValidationSession {
    let tasks = sample_tasks(records, request.dataset, request.per_code_cap, request.seed, ctx);
    ValidationSession {
        session_id: request.session_id,
        annotator_id: request.annotator_id,
        dataset: request.dataset,
        per_code_cap: request.per_code_cap,
        seed: request.seed,
        tasks,
        marks: BTreeMap::new(),
        annotations: Vec::new(),
        finalized: false,
    }
}

impl ValidationSession {
    pub fn task(&self, task_id: &str) -> Option<&ValidationTask> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    fn ensure_open(&self) -> Result<()> {
        if self.finalized {
            Err(Error::SessionFinalized(self.session_id.clone()))
        } else {
            Ok(())
        }
    }

    fn ensure_finalized(&self) -> Result<()> {
        if self.finalized {
            Ok(())
        } else {
            Err(Error::SessionOpen(self.session_id.clone()))
        }
    }

    /// Records a mark; a later mark for the same task replaces the earlier one.
    pub fn submit_mark(&mut self, task_id: &str, mark: Mark) -> Result<()> {
        self.ensure_open()?;
        if self.task(task_id).is_none() {
            return Err(Error::UnknownTask {
                session_id: self.session_id.clone(),
                task_id: task_id.to_string(),
            });
        }
        self.marks.insert(task_id.to_string(), mark);
        Ok(())
    }

    /// Adds a span annotation on `document`. The surface is taken from the
    /// document text.
    pub fn add_annotation(
        &mut self,
        doc_id: &str,
        document: &str,
        start: usize,
        end: usize,
        concept_id: &str,
        correct: bool,
    ) -> Result<&AnnotationExample> {
        self.ensure_open()?;
        let surface = match document.get(start..end) {
            Some(s) if start < end && !s.trim().is_empty() => s.to_string(),
            _ => {
                return Err(Error::InvalidSpan {
                    doc_id: doc_id.to_string(),
                    start,
                    end,
                })
            }
        };
        self.annotations.push(AnnotationExample {
            doc_id: doc_id.to_string(),
            start,
            end,
            surface,
            concept_id: concept_id.to_string(),
            correct,
            annotator_id: self.annotator_id.clone(),
        });
        Ok(self.annotations.last().expect("just pushed"))
    }

    pub fn finalize(&mut self) -> Result<()> {
        self.ensure_open()?;
        self.finalized = true;
        Ok(())
    }

    /// Mark of a task, with unmarked tasks counting as skipped.
    pub fn mark_of(&self, task_id: &str) -> Mark {
        self.marks.get(task_id).copied().unwrap_or(Mark::Skipped)
    }

    /// Share of non-skipped tasks marked correct; `None` when all were skipped.
    pub fn percent_correct(&self) -> Option<f64> {
        let (mut correct, mut marked) = (0u64, 0u64);
        for t in &self.tasks {
            match self.mark_of(&t.task_id) {
                Mark::Correct => {
                    correct += 1;
                    marked += 1;
                }
                Mark::Incorrect => marked += 1,
                Mark::Skipped => {}
            }
        }
        (marked > 0).then(|| correct as f64 / marked as f64)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("{}.json", self.session_id));
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(&path, e))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

/// All `*.json` sessions in `dir`, ordered by session id.
pub fn load_sessions(dir: &Path) -> Result<Vec<ValidationSession>> {
    let mut sessions = Vec::new();
    if !dir.is_dir() {
        return Ok(sessions);
    }
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            sessions.push(ValidationSession::load(&path)?);
        }
    }
    sessions.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    Ok(sessions)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub kappa: f64,
    /// Tasks both annotators marked correct or incorrect.
    pub jointly_marked: usize,
    pub percent_correct_a: Option<f64>,
    pub percent_correct_b: Option<f64>,
}

/// Cohen's kappa over the tasks both sessions marked.
pub fn agreement(a: &ValidationSession, b: &ValidationSession) -> Result<Agreement> {
    a.ensure_finalized()?;
    b.ensure_finalized()?;
    let b_ids: BTreeSet<&str> = b.tasks.iter().map(|t| t.task_id.as_str()).collect();
    let shared: Vec<&str> = a
        .tasks
        .iter()
        .map(|t| t.task_id.as_str())
        .filter(|id| b_ids.contains(id))
        .collect();
    if shared.is_empty() {
        return Err(Error::DisjointSessions(a.session_id.clone(), b.session_id.clone()));
    }
    let mut marks_a = Vec::new();
    let mut marks_b = Vec::new();
    for id in shared {
        match (a.mark_of(id), b.mark_of(id)) {
            (Mark::Skipped, _) | (_, Mark::Skipped) => {}
            (x, y) => {
                marks_a.push(x == Mark::Correct);
                marks_b.push(y == Mark::Correct);
            }
        }
    }
    Ok(Agreement {
        kappa: cohens_kappa(&marks_a, &marks_b)?,
        jointly_marked: marks_a.len(),
        percent_correct_a: a.percent_correct(),
        percent_correct_b: b.percent_correct(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeTally {
    pub correct: u64,
    pub marked: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CodeValidation {
    /// Codes below the threshold, including unvalidated ones.
    pub failing: BTreeSet<CodeId>,
    /// Codes that were sampled but never marked.
    pub unvalidated: BTreeSet<CodeId>,
    pub passing: BTreeSet<CodeId>,
    pub tallies: BTreeMap<CodeId, CodeTally>,
}

/// Pools marks per code across sessions. A code fails when its share of
/// correct marks is below `threshold`, or when it has no marks at all.
pub fn failing_codes(sessions: &[ValidationSession], threshold: f64) -> Result<CodeValidation> {
    let mut tallies: BTreeMap<CodeId, CodeTally> = BTreeMap::new();
    for s in sessions {
        s.ensure_finalized()?;
        for t in &s.tasks {
            let tally = tallies.entry(t.code.clone()).or_default();
            match s.mark_of(&t.task_id) {
                Mark::Correct => {
                    tally.correct += 1;
                    tally.marked += 1;
                }
                Mark::Incorrect => tally.marked += 1,
                Mark::Skipped => {}
            }
        }
    }
    let mut out = CodeValidation::default();
    for (code, tally) in &tallies {
        if tally.marked == 0 {
            out.unvalidated.insert(code.clone());
            out.failing.insert(code.clone());
        } else if (tally.correct as f64 / tally.marked as f64) < threshold {
            out.failing.insert(code.clone());
        } else {
            out.passing.insert(code.clone());
        }
    }
    out.tallies = tallies;
    Ok(out)
}

/// Marked predictions and added spans as fine-tuning examples, in session
/// order. Tasks without a span only contribute through added annotations.
pub fn export_annotations(sessions: &[ValidationSession], dict: Option<&ConceptDictionary>) -> Result<Vec<AnnotationExample>> {
    let mut ordered: Vec<&ValidationSession> = sessions.iter().collect();
    ordered.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    let mut out = Vec::new();
    for s in ordered {
        s.ensure_finalized()?;
        for t in &s.tasks {
            let correct = match s.mark_of(&t.task_id) {
                Mark::Correct => true,
                Mark::Incorrect => false,
                Mark::Skipped => continue,
            };
            let (Some(span), Some(concept_id)) = (&t.span, &t.concept_id) else {
                continue;
            };
            let concept_id = span_concept(dict, &span.text, &t.code).unwrap_or_else(|| concept_id.clone());
            out.push(AnnotationExample {
                doc_id: t.admission_id.clone(),
                start: span.start,
                end: span.end,
                surface: span.text.clone(),
                concept_id,
                correct,
                annotator_id: s.annotator_id.clone(),
            });
        }
        out.extend(s.annotations.iter().cloned());
    }
    Ok(out)
}

/// Concept named by `surface` that carries `code`, when the dictionary has one.
fn span_concept(dict: Option<&ConceptDictionary>, surface: &str, code: &CodeId) -> Option<String> {
    let dict = dict?;
    dict.lookup(surface)?
        .iter()
        .find(|id| dict.concept(id).is_some_and(|c| c.codes.contains(code)))
        .cloned()
}
