//! File-based pipeline stages. Each stage reads the artifacts of earlier
//! stages from the output directory and writes its own next to them.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotation::{concepts_by_code, export_annotations, failing_codes, load_sessions, CodeValidation};
use crate::audit::{
    build_report, coverage_fraction, partition, AdmissionCodes, AuditReport, Bucket, DdFacts, PartitionRecord,
    SpanEvidence,
};
use crate::corpus::{
    emit_silver_standard, generate_synthetic, load_assignments, load_notes, save_assignments, save_ground_truth,
    save_notes, vocabulary_dictionary, SynthConfig, ValidationOutcome, DISCHARGE_CATEGORY,
};
use crate::error::{Error, Result};
use crate::ner::{annotate_document, fine_tune, train_unsupervised, ContextModel, EntitySpan, FineTuneReport, ModelConfig, TrainStats};
use crate::sectioner::{find_dd_section, section_stats_from_lengths, token_count, HeadingRules, SectionSpan, SectionStats};
use crate::taxonomy::{top_k_codes, CodeId, ConceptDictionary, DEFAULT_TOP_K};

pub const NOTES: &str = "notes.csv";
pub const ASSIGNMENTS: &str = "assignments.csv";
pub const DICTIONARY: &str = "dictionary.csv";
pub const GROUND_TRUTH: &str = "ground_truth.csv";
pub const DD_SECTIONS: &str = "dd_sections.jsonl";
pub const SECTION_STATS: &str = "section_stats.json";
pub const MODEL: &str = "model.json";
pub const PREDICTIONS: &str = "predictions.jsonl";
pub const PARTITION: &str = "partition.csv";
pub const SCOPE: &str = "scope.csv";
pub const PARTITION_SUMMARY: &str = "partition_summary.json";
pub const REPORT: &str = "report.json";
pub const PER_CODE: &str = "per_code.csv";
pub const SESSIONS: &str = "sessions";
pub const FINETUNED_MODEL: &str = "model.finetuned.json";
pub const FINETUNED_DICTIONARY: &str = "dictionary.finetuned.csv";
pub const FINE_TUNE_METRICS: &str = "fine_tune_metrics.json";
pub const SILVER: &str = "silver_standard.csv";
pub const VALIDATION: &str = "validation.json";
pub const CONFIG_DIR: &str = "config";

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub out: PathBuf,
    pub notes: Option<PathBuf>,
    pub assignments: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub top_k: usize,
    pub seed: u64,
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
    pub threshold_sim: f32,
    pub threshold_exclude: f64,
}

impl PipelineConfig {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            out: out.into(),
            notes: None,
            assignments: None,
            dictionary: None,
            model: None,
            rules: None,
            top_k: DEFAULT_TOP_K,
            seed: 42,
            threads: 0,
            threshold_sim: ModelConfig::default().similarity_threshold,
            threshold_exclude: crate::annotation::DEFAULT_EXCLUDE_THRESHOLD,
        }
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn notes_path(&self) -> PathBuf {
        self.notes.clone().unwrap_or_else(|| self.artifact(NOTES))
    }

    pub fn assignments_path(&self) -> PathBuf {
        self.assignments.clone().unwrap_or_else(|| self.artifact(ASSIGNMENTS))
    }

    /// Explicit path, else the fine-tuned dictionary when present, else the
    /// base one.
    pub fn dictionary_path(&self) -> PathBuf {
        self.dictionary.clone().unwrap_or_else(|| self.prefer(FINETUNED_DICTIONARY, DICTIONARY))
    }

    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.prefer(FINETUNED_MODEL, MODEL))
    }

    fn prefer(&self, tuned: &str, base: &str) -> PathBuf {
        let tuned = self.artifact(tuned);
        if tuned.exists() {
            tuned
        } else {
            self.artifact(base)
        }
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.artifact(SESSIONS)
    }

    pub fn heading_rules(&self) -> Result<HeadingRules> {
        match &self.rules {
            Some(path) => HeadingRules::load(path),
            None => Ok(HeadingRules::default()),
        }
    }

    /// Runs `f` on a pool with the configured number of threads.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(pool.install(f))
    }

    fn shown(&self, path: &Path) -> String {
        path.strip_prefix(&self.out).unwrap_or(path).display().to_string()
    }

    /// Records the settings of a stage under `config/<stage>.json`. The thread
    /// count is left out since it never changes the output.
    pub fn echo(&self, stage: &str, extra: serde_json::Value) -> Result<String> {
        let body = serde_json::json!({
            "stage": stage,
            "notes": self.shown(&self.notes_path()),
            "assignments": self.shown(&self.assignments_path()),
            "dictionary": self.shown(&self.dictionary_path()),
            "model": self.shown(&self.model_path()),
            "rules": self.rules.as_deref().map(|p| self.shown(p)),
            "top_k": self.top_k,
            "seed": self.seed,
            "threshold_sim": self.threshold_sim,
            "threshold_exclude": self.threshold_exclude,
            "extra": extra,
        });
        let text = serde_json::to_string_pretty(&body).expect("config serialises");
        let run_id = hex::encode(&Sha256::digest(text.as_bytes())[..8]);
        let echoed = serde_json::json!({ "run_id": run_id, "config": body });
        let dir = self.artifact(CONFIG_DIR);
        ensure_dir(&dir)?;
        write_json(&dir.join(format!("{stage}.json")), &echoed)?;
        Ok(run_id)
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn require(path: PathBuf, stage: &str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact {
            artifact: path,
            stage: stage.to_string(),
        })
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(row).map_err(|e| Error::json(path, e))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            rows.push(serde_json::from_str(&line).map_err(|e| Error::json(path, e))?);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub admissions: usize,
    pub assignments: usize,
    pub concepts: usize,
}

pub fn run_synth(cfg: &PipelineConfig, synth: &SynthConfig) -> Result<SynthSummary> {
    ensure_dir(&cfg.out)?;
    let (bundle, truth) = cfg.install(|| generate_synthetic(synth))??;
    let dict = vocabulary_dictionary(&synth.code_vocabulary)?;
    save_notes(&bundle.notes, &cfg.artifact(NOTES))?;
    save_assignments(&bundle.assignments, &cfg.artifact(ASSIGNMENTS))?;
    dict.save(&cfg.artifact(DICTIONARY))?;
    save_ground_truth(&truth, &cfg.artifact(GROUND_TRUTH))?;
    cfg.echo(
        "synth",
        serde_json::json!({
            "n_admissions": synth.n_admissions,
            "undercode_rate": synth.undercode_rate,
            "synonym_noise_rate": synth.synonym_noise_rate,
            "seed": synth.seed,
            "min_codes": synth.min_codes,
            "max_codes": synth.max_codes,
            "missing_section_rate": synth.missing_section_rate,
            "max_unlisted": synth.max_unlisted,
            "vocabulary_size": synth.code_vocabulary.len(),
        }),
    )?;
    Ok(SynthSummary {
        admissions: bundle.notes.len(),
        assignments: bundle.assignments.len(),
        concepts: dict.len(),
    })
}

/// One note with its extracted section, if any.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DdRecord {
    pub note_id: String,
    pub admission_id: String,
    pub section: Option<SectionSpan>,
}

pub fn run_extract_dd(cfg: &PipelineConfig) -> Result<SectionStats> {
    ensure_dir(&cfg.out)?;
    let notes_path = cfg.notes_path();
    if cfg.notes.is_none() {
        require(notes_path.clone(), "synth")?;
    }
    let rules = cfg.heading_rules()?;
    let loaded = load_notes(&notes_path, Some(DISCHARGE_CATEGORY))?;
    let records: Vec<DdRecord> = cfg.install(|| {
        loaded
            .notes
            .par_iter()
            .map(|n| DdRecord {
                note_id: n.note_id.clone(),
                admission_id: n.admission_id.clone(),
                section: find_dd_section(n, &rules),
            })
            .collect()
    })?;
    let lengths: Vec<f64> = records
        .iter()
        .filter_map(|r| r.section.as_ref())
        .map(|s| token_count(&s.body) as f64)
        .collect();
    let stats = section_stats_from_lengths(records.len(), &lengths);
    write_jsonl(&cfg.artifact(DD_SECTIONS), &records)?;
    write_json(&cfg.artifact(SECTION_STATS), &stats)?;
    cfg.echo(
        "extract-dd",
        serde_json::json!({
            "category": DISCHARGE_CATEGORY,
            "heading_rules": rules.rules(),
            "skipped_without_admission": loaded.skipped_without_admission,
            "skipped_by_category": loaded.skipped_by_category,
        }),
    )?;
    Ok(stats)
}

/// First extracted section per admission, in note order. Admissions whose
/// notes have no section map to `None`.
pub fn load_dd_sections(cfg: &PipelineConfig) -> Result<BTreeMap<String, Option<SectionSpan>>> {
    let records: Vec<DdRecord> = read_jsonl(&require(cfg.artifact(DD_SECTIONS), "extract-dd")?)?;
    let mut out: BTreeMap<String, Option<SectionSpan>> = BTreeMap::new();
    for r in records {
        let slot = out.entry(r.admission_id).or_insert(None);
        if slot.is_none() {
            *slot = r.section;
        }
    }
    Ok(out)
}

/// Section bodies keyed by admission id.
pub fn dd_documents(sections: &BTreeMap<String, Option<SectionSpan>>) -> BTreeMap<String, String> {
    sections
        .iter()
        .filter_map(|(id, s)| s.as_ref().map(|s| (id.clone(), s.body.clone())))
        .collect()
}

fn load_dictionary(cfg: &PipelineConfig, stage: &str) -> Result<ConceptDictionary> {
    let path = cfg.dictionary_path();
    if cfg.dictionary.is_none() {
        require(path.clone(), stage)?;
    }
    ConceptDictionary::load(&path)
}

fn load_model(cfg: &PipelineConfig, dict: &ConceptDictionary) -> Result<ContextModel> {
    let path = cfg.model_path();
    if cfg.model.is_none() {
        require(path.clone(), "train")?;
    }
    let mut model = ContextModel::load(&path)?;
    let actual = dict.version_hash();
    if let Some(expected) = model.dictionary_hash() {
        if expected != actual {
            return Err(Error::DictionaryMismatch {
                expected: expected.to_string(),
                actual,
            });
        }
    }
    model.set_similarity_threshold(cfg.threshold_sim)?;
    Ok(model)
}

pub fn run_train(cfg: &PipelineConfig, model_config: ModelConfig) -> Result<TrainStats> {
    let sections = load_dd_sections(cfg)?;
    let dict = load_dictionary(cfg, "synth")?;
    let corpus: Vec<String> = dd_documents(&sections).into_values().collect();
    let mut model = ContextModel::new(ModelConfig {
        seed: cfg.seed,
        similarity_threshold: cfg.threshold_sim,
        ..model_config
    })?;
    let stats = train_unsupervised(&corpus, &dict, &mut model);
    model.set_dictionary_hash(dict.version_hash());
    model.save(&cfg.artifact(MODEL))?;
    cfg.echo("train", serde_json::to_value(model.config()).expect("config serialises"))?;
    Ok(stats)
}

/// Accepted spans of one admission's section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub admission_id: String,
    pub dd: Option<DdFacts>,
    pub spans: Vec<EntitySpan>,
}

pub fn annotate_sections(
    sections: &BTreeMap<String, Option<SectionSpan>>,
    dict: &ConceptDictionary,
    model: &ContextModel,
) -> Vec<PredictionRecord> {
    let items: Vec<(&String, &Option<SectionSpan>)> = sections.iter().collect();
    items
        .par_iter()
        .map(|(id, section)| match section {
            Some(s) => {
                let spans = annotate_document(&s.body, dict, model);
                PredictionRecord {
                    admission_id: (*id).clone(),
                    dd: Some(DdFacts {
                        line_count: s.line_items.len(),
                        char_length: s.body.chars().count(),
                        token_length: token_count(&s.body),
                        coverage: coverage_fraction(&s.body, &spans),
                    }),
                    spans,
                }
            }
            None => PredictionRecord {
                admission_id: (*id).clone(),
                dd: None,
                spans: Vec::new(),
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotateSummary {
    pub admissions: usize,
    pub with_section: usize,
    pub spans: usize,
    pub model_version: u64,
}

pub fn run_annotate(cfg: &PipelineConfig) -> Result<AnnotateSummary> {
    let sections = load_dd_sections(cfg)?;
    let dict = load_dictionary(cfg, "synth")?;
    let model = load_model(cfg, &dict)?;
    let predictions = cfg.install(|| annotate_sections(&sections, &dict, &model))?;
    write_jsonl(&cfg.artifact(PREDICTIONS), &predictions)?;
    cfg.echo(
        "annotate",
        serde_json::json!({
            "model_version": model.version(),
            "dictionary_hash": dict.version_hash(),
        }),
    )?;
    Ok(AnnotateSummary {
        admissions: predictions.len(),
        with_section: predictions.iter().filter(|p| p.dd.is_some()).count(),
        spans: predictions.iter().map(|p| p.spans.len()).sum(),
        model_version: model.version(),
    })
}

pub fn load_predictions(cfg: &PipelineConfig) -> Result<Vec<PredictionRecord>> {
    read_jsonl(&require(cfg.artifact(PREDICTIONS), "annotate")?)
}

/// Predictions joined with assignments. Admissions that only appear in the
/// assignments are kept without a section.
pub fn admissions_from(
    predictions: &[PredictionRecord],
    assigned: &BTreeMap<String, Vec<CodeId>>,
) -> Vec<AdmissionCodes> {
    let mut out: BTreeMap<&str, AdmissionCodes> = BTreeMap::new();
    for p in predictions {
        let codes: BTreeSet<CodeId> = assigned.get(&p.admission_id).into_iter().flatten().cloned().collect();
        out.insert(&p.admission_id, AdmissionCodes::from_spans(&p.admission_id, codes, &p.spans, p.dd));
    }
    for (id, codes) in assigned {
        out.entry(id).or_insert_with(|| AdmissionCodes {
            admission_id: id.clone(),
            assigned: codes.iter().cloned().collect(),
            ..AdmissionCodes::default()
        });
    }
    out.into_values().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub admissions: usize,
    pub orphan_admissions: usize,
    pub rejected_assignments: usize,
    pub scope_codes: usize,
    pub p_a: usize,
    pub p_na: usize,
    pub a_np: usize,
}

fn load_assigned(cfg: &PipelineConfig) -> Result<(BTreeMap<String, Vec<CodeId>>, usize)> {
    let path = cfg.assignments_path();
    if cfg.assignments.is_none() {
        require(path.clone(), "synth")?;
    }
    let loaded = load_assignments(&path)?;
    Ok((crate::corpus::group_assignments(&loaded.assignments), loaded.rejected.len()))
}

pub fn run_partition(cfg: &PipelineConfig) -> Result<PartitionSummary> {
    let predictions = load_predictions(cfg)?;
    let (assigned, rejected) = load_assigned(cfg)?;
    let with_notes: BTreeSet<&str> = predictions.iter().map(|p| p.admission_id.as_str()).collect();
    let orphans = assigned.keys().filter(|id| !with_notes.contains(id.as_str())).count();
    let scope = top_k_codes(assigned.values().flatten(), cfg.top_k);
    let scope_set: BTreeSet<CodeId> = scope.iter().map(|(c, _)| c.clone()).collect();
    let admissions = admissions_from(&predictions, &assigned);
    let records = partition(&admissions, &scope_set);
    write_partition(&records, &cfg.artifact(PARTITION))?;
    write_scope(&scope, &cfg.artifact(SCOPE))?;
    let count = |b: Bucket| records.iter().filter(|r| r.bucket == b).count();
    let summary = PartitionSummary {
        admissions: admissions.len(),
        orphan_admissions: orphans,
        rejected_assignments: rejected,
        scope_codes: scope.len(),
        p_a: count(Bucket::PredictedAssigned),
        p_na: count(Bucket::PredictedNotAssigned),
        a_np: count(Bucket::AssignedNotPredicted),
    };
    write_json(&cfg.artifact(PARTITION_SUMMARY), &summary)?;
    cfg.echo("partition", serde_json::Value::Null)?;
    Ok(summary)
}

const PARTITION_HEADER: [&str; 6] = ["admission_id", "code", "bucket", "span_start", "span_end", "span_text"];

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Error::csv(path, e))
}

pub fn write_partition(records: &[PartitionRecord], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let run = |w: &mut csv::Writer<std::fs::File>| -> csv::Result<()> {
        w.write_record(PARTITION_HEADER)?;
        for r in records {
            let (start, end, text) = match &r.evidence {
                Some(e) => (e.start.to_string(), e.end.to_string(), e.text.as_str()),
                None => (String::new(), String::new(), ""),
            };
            w.write_record([r.admission_id.as_str(), r.code.canonical(), r.bucket.as_str(), &start, &end, text])?;
        }
        w.flush()?;
        Ok(())
    };
    run(&mut w).map_err(|e| Error::csv(path, e))
}

pub fn read_partition(path: &Path) -> Result<Vec<PartitionRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let bad = |message: String| Error::MalformedRow {
            path: path.to_path_buf(),
            row: i as u64 + 2,
            message,
        };
        if rec.len() != PARTITION_HEADER.len() {
            return Err(bad(format!("expected {} fields", PARTITION_HEADER.len())));
        }
        let code = CodeId::parse(&rec[1]).map_err(|e| bad(e.to_string()))?;
        let bucket = Bucket::parse(&rec[2]).ok_or_else(|| bad(format!("unknown bucket {:?}", &rec[2])))?;
        let evidence = if rec[3].is_empty() {
            None
        } else {
            Some(SpanEvidence {
                start: rec[3].parse().map_err(|_| bad("bad span_start".into()))?,
                end: rec[4].parse().map_err(|_| bad("bad span_end".into()))?,
                text: rec[5].to_string(),
            })
        };
        out.push(PartitionRecord {
            admission_id: rec[0].to_string(),
            code,
            bucket,
            evidence,
        });
    }
    Ok(out)
}

fn write_scope(scope: &[(CodeId, u64)], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let run = |w: &mut csv::Writer<std::fs::File>| -> csv::Result<()> {
        w.write_record(["code", "assigned"])?;
        for (code, n) in scope {
            w.write_record([code.canonical(), &n.to_string()])?;
        }
        w.flush()?;
        Ok(())
    };
    run(&mut w).map_err(|e| Error::csv(path, e))
}

pub fn read_scope(path: &Path) -> Result<BTreeSet<CodeId>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut out = BTreeSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let code = CodeId::parse(&rec[0]).map_err(|e| Error::MalformedRow {
            path: path.to_path_buf(),
            row: i as u64 + 2,
            message: e.to_string(),
        })?;
        out.insert(code);
    }
    Ok(out)
}

pub fn load_partition(cfg: &PipelineConfig) -> Result<Vec<PartitionRecord>> {
    read_partition(&require(cfg.artifact(PARTITION), "partition")?)
}

pub fn run_report(cfg: &PipelineConfig) -> Result<AuditReport> {
    let records = load_partition(cfg)?;
    let scope = read_scope(&require(cfg.artifact(SCOPE), "partition")?)?;
    let predictions = load_predictions(cfg)?;
    let (assigned, _) = load_assigned(cfg)?;
    let admissions = admissions_from(&predictions, &assigned);
    let report = build_report(&admissions, &records, &scope);
    write_text(&cfg.artifact(REPORT), &report.to_json())?;
    write_text(&cfg.artifact(PER_CODE), &report.per_code_csv())?;
    cfg.echo("report", serde_json::Value::Null)?;
    Ok(report)
}

/// Inputs of the review service.
#[derive(Debug, Clone)]
pub struct ReviewInputs {
    pub records: Vec<PartitionRecord>,
    pub documents: BTreeMap<String, String>,
    pub predictions: BTreeMap<String, Vec<EntitySpan>>,
    pub code_concepts: BTreeMap<CodeId, String>,
    pub dictionary: ConceptDictionary,
}

pub fn load_review_inputs(cfg: &PipelineConfig) -> Result<ReviewInputs> {
    let records = load_partition(cfg)?;
    let documents = dd_documents(&load_dd_sections(cfg)?);
    let predictions = load_predictions(cfg)?
        .into_iter()
        .map(|p| (p.admission_id, p.spans))
        .collect();
    let dictionary = load_dictionary(cfg, "synth")?;
    Ok(ReviewInputs {
        records,
        documents,
        predictions,
        code_concepts: concepts_by_code(&dictionary),
        dictionary,
    })
}

fn finalized_sessions(cfg: &PipelineConfig) -> Result<Vec<crate::annotation::ValidationSession>> {
    let dir = cfg.sessions_dir();
    let sessions: Vec<_> = load_sessions(&dir)?.into_iter().filter(|s| s.finalized).collect();
    if sessions.is_empty() {
        return Err(Error::MissingArtifact {
            artifact: dir,
            stage: "serve".into(),
        });
    }
    Ok(sessions)
}

pub fn run_fine_tune(cfg: &PipelineConfig) -> Result<FineTuneReport> {
    let sessions = finalized_sessions(cfg)?;
    let documents = dd_documents(&load_dd_sections(cfg)?);
    let mut dict = load_dictionary(cfg, "synth")?;
    let mut model = load_model(cfg, &dict)?;
    let examples = export_annotations(&sessions, Some(&dict))?;
    let report = fine_tune(&examples, &documents, &mut dict, &mut model, cfg.seed);
    model.set_dictionary_hash(dict.version_hash());
    model.save(&cfg.artifact(FINETUNED_MODEL))?;
    dict.save(&cfg.artifact(FINETUNED_DICTIONARY))?;
    write_json(&cfg.artifact(FINE_TUNE_METRICS), &report)?;
    cfg.echo(
        "fine-tune",
        serde_json::json!({
            "sessions": sessions.iter().map(|s| &s.session_id).collect::<Vec<_>>(),
            "examples": examples.len(),
        }),
    )?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilverSummary {
    pub rows: usize,
    pub validation: CodeValidation,
}

pub fn run_emit_silver(cfg: &PipelineConfig) -> Result<SilverSummary> {
    let records = load_partition(cfg)?;
    let sessions = finalized_sessions(cfg)?;
    let validation = failing_codes(&sessions, cfg.threshold_exclude)?;
    let outcome = ValidationOutcome::new(validation.passing.iter().cloned(), validation.failing.iter().cloned());
    let rows = emit_silver_standard(&records, &outcome, &cfg.artifact(SILVER))?;
    write_json(&cfg.artifact(VALIDATION), &validation)?;
    cfg.echo(
        "emit-silver",
        serde_json::json!({
            "sessions": sessions.iter().map(|s| &s.session_id).collect::<Vec<_>>(),
        }),
    )?;
    Ok(SilverSummary {
        rows: rows.len(),
        validation,
    })
}

/// Runs extract-dd through report in order.
pub fn run_audit(cfg: &PipelineConfig, model_config: ModelConfig) -> Result<AuditReport> {
    run_extract_dd(cfg)?;
    run_train(cfg, model_config)?;
    run_annotate(cfg)?;
    run_partition(cfg)?;
    run_report(cfg)
}
