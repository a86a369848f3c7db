use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sectioner::NoteDocument;
use crate::taxonomy::CodeId;

/// MIMIC-III category of discharge summaries.
pub const DISCHARGE_CATEGORY: &str = "Discharge summary";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub admission_id: String,
    pub seq_num: u32,
    pub code: CodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub row: u64,
    pub value: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssignmentLoad {
    pub assignments: Vec<Assignment>,
    pub rejected: Vec<RejectedRow>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NotesLoad {
    pub notes: Vec<NoteDocument>,
    /// Rows without an admission id (outpatient notes).
    pub skipped_without_admission: u64,
    pub skipped_by_category: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusBundle {
    pub notes: Vec<NoteDocument>,
    pub assignments: Vec<Assignment>,
}

impl CorpusBundle {
    /// Admission ids that have assignments but no note.
    pub fn orphan_admissions(&self) -> Vec<String> {
        let with_notes: std::collections::BTreeSet<&str> =
            self.notes.iter().map(|n| n.admission_id.as_str()).collect();
        let mut orphans: Vec<String> = self
            .assignments
            .iter()
            .filter(|a| !with_notes.contains(a.admission_id.as_str()))
            .map(|a| a.admission_id.clone())
            .collect();
        orphans.sort();
        orphans.dedup();
        orphans
    }

    /// Assigned codes grouped per admission.
    pub fn assigned_by_admission(&self) -> BTreeMap<String, Vec<CodeId>> {
        group_assignments(&self.assignments)
    }
}

pub fn group_assignments(assignments: &[Assignment]) -> BTreeMap<String, Vec<CodeId>> {
    let mut out: BTreeMap<String, Vec<CodeId>> = BTreeMap::new();
    for a in assignments {
        out.entry(a.admission_id.clone()).or_default().push(a.code.clone());
    }
    out
}

fn column_index(headers: &csv::StringRecord, column: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(column))
        .ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: column.into(),
        })
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn record_line(record: &csv::StringRecord, fallback: u64) -> u64 {
    record.position().map_or(fallback, |p| p.line())
}

/// Reads a note table with at least `ROW_ID,HADM_ID,CATEGORY,TEXT` (extra
/// columns are ignored). With `category` set, other categories are skipped.
pub fn load_notes(path: &Path, category: Option<&str>) -> Result<NotesLoad> {
    read_notes(open(path)?, path, category)
}

pub fn read_notes<R: Read>(reader: R, path: &Path, category: Option<&str>) -> Result<NotesLoad> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let row_id = column_index(&headers, "ROW_ID", path)?;
    let hadm = column_index(&headers, "HADM_ID", path)?;
    let cat = column_index(&headers, "CATEGORY", path)?;
    let text = column_index(&headers, "TEXT", path)?;

    let mut out = NotesLoad::default();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::MalformedRow {
            path: path.to_path_buf(),
            row: e.position().map_or(i as u64 + 2, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record_line(&record, i as u64 + 2);
        let note_id = record[row_id].trim();
        if note_id.is_empty() {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                row: line,
                message: "empty ROW_ID".into(),
            });
        }
        if let Some(wanted) = category {
            if !record[cat].trim().eq_ignore_ascii_case(wanted) {
                out.skipped_by_category += 1;
                continue;
            }
        }
        let admission_id = record[hadm].trim();
        if admission_id.is_empty() {
            out.skipped_without_admission += 1;
            continue;
        }
        out.notes.push(NoteDocument {
            note_id: note_id.to_string(),
            admission_id: admission_id.to_string(),
            category: record[cat].trim().to_string(),
            text: record[text].to_string(),
        });
    }
    Ok(out)
}

/// Reads a diagnosis table with `HADM_ID,SEQ_NUM,ICD9_CODE`. Rows with an
/// unparseable code or sequence number are reported, not fatal.
pub fn load_assignments(path: &Path) -> Result<AssignmentLoad> {
    read_assignments(open(path)?, path)
}

pub fn read_assignments<R: Read>(reader: R, path: &Path) -> Result<AssignmentLoad> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let hadm = column_index(&headers, "HADM_ID", path)?;
    let seq = column_index(&headers, "SEQ_NUM", path)?;
    let icd = column_index(&headers, "ICD9_CODE", path)?;

    let mut out = AssignmentLoad::default();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::MalformedRow {
            path: path.to_path_buf(),
            row: e.position().map_or(i as u64 + 2, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record_line(&record, i as u64 + 2);
        let admission_id = record[hadm].trim();
        if admission_id.is_empty() {
            out.rejected.push(RejectedRow {
                row: line,
                value: String::new(),
                reason: "empty HADM_ID".into(),
            });
            continue;
        }
        let seq_num = match record[seq].trim().parse::<u32>() {
            Ok(n) if n >= 1 => n,
            _ => {
                out.rejected.push(RejectedRow {
                    row: line,
                    value: record[seq].to_string(),
                    reason: "SEQ_NUM must be a positive integer".into(),
                });
                continue;
            }
        };
        match CodeId::parse(&record[icd]) {
            Ok(code) => out.assignments.push(Assignment {
                admission_id: admission_id.to_string(),
                seq_num,
                code,
            }),
            Err(e) => out.rejected.push(RejectedRow {
                row: line,
                value: record[icd].to_string(),
                reason: e.to_string(),
            }),
        }
    }
    Ok(out)
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

pub fn write_notes<W: Write>(notes: &[NoteDocument], w: W) -> csv::Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(["ROW_ID", "HADM_ID", "CATEGORY", "TEXT"])?;
    for n in notes {
        wtr.write_record([&n.note_id, &n.admission_id, &n.category, &n.text])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_assignments<W: Write>(assignments: &[Assignment], w: W) -> csv::Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(["HADM_ID", "SEQ_NUM", "ICD9_CODE"])?;
    for a in assignments {
        wtr.write_record([a.admission_id.as_str(), &a.seq_num.to_string(), a.code.canonical()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_notes(notes: &[NoteDocument], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_notes(notes, std::io::BufWriter::new(f)).map_err(|e| Error::csv(path, e))
}

pub fn save_assignments(assignments: &[Assignment], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_assignments(assignments, std::io::BufWriter::new(f)).map_err(|e| Error::csv(path, e))
}

/// Notes grouped per admission, keeping file order inside each group.
pub fn notes_by_admission(notes: &[NoteDocument]) -> BTreeMap<&str, Vec<&NoteDocument>> {
    let mut out: BTreeMap<&str, Vec<&NoteDocument>> = BTreeMap::new();
    for n in notes {
        out.entry(n.admission_id.as_str()).or_default().push(n);
    }
    out
}
