//! Silver-standard table: reconciled codes labelled by validation outcome.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audit::{Bucket, PartitionRecord, SpanEvidence};
use crate::error::{Error, Result};
use crate::taxonomy::CodeId;

pub const SILVER_HEADER: [&str; 6] = ["admission_id", "code", "validated", "span_start", "span_end", "span_text"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validated {
    /// Predicted and assigned.
    Yes,
    /// Predicted but not assigned.
    NewCode,
    /// Assigned but not predicted.
    No,
}

impl Validated {
    pub fn as_str(self) -> &'static str {
        match self {
            Validated::Yes => "yes",
            Validated::NewCode => "new_code",
            Validated::No => "no",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "yes" => Some(Validated::Yes),
            "new_code" => Some(Validated::NewCode),
            "no" => Some(Validated::No),
            _ => None,
        }
    }

    pub fn for_bucket(bucket: Bucket) -> Self {
        match bucket {
            Bucket::PredictedAssigned => Validated::Yes,
            Bucket::PredictedNotAssigned => Validated::NewCode,
            Bucket::AssignedNotPredicted => Validated::No,
        }
    }
}

impl fmt::Display for Validated {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SilverStandardRow {
    pub admission_id: String,
    pub code: CodeId,
    pub validated: Validated,
    /// Empty for `no` rows.
    pub source_span: Option<SpanEvidence>,
}

/// Codes that passed or failed human validation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub passed: BTreeSet<CodeId>,
    pub failed: BTreeSet<CodeId>,
}

impl ValidationOutcome {
    pub fn new(passed: impl IntoIterator<Item = CodeId>, failed: impl IntoIterator<Item = CodeId>) -> Self {
        let failed: BTreeSet<CodeId> = failed.into_iter().collect();
        let passed = passed.into_iter().filter(|c| !failed.contains(c)).collect();
        ValidationOutcome { passed, failed }
    }
}

/// Labels every surviving partition record. Records of failing codes are
/// dropped; predicted records need a verdict for their code.
pub fn silver_rows(partition: &[PartitionRecord], validation: &ValidationOutcome) -> Result<Vec<SilverStandardRow>> {
    let mut rows = Vec::new();
    for record in partition {
        if validation.failed.contains(&record.code) {
            continue;
        }
        let predicted = record.bucket != Bucket::AssignedNotPredicted;
        if predicted && !validation.passed.contains(&record.code) {
            return Err(Error::MissingValidation(record.code.canonical().to_string()));
        }
        rows.push(SilverStandardRow {
            admission_id: record.admission_id.clone(),
            code: record.code.clone(),
            validated: Validated::for_bucket(record.bucket),
            source_span: if predicted { record.evidence.clone() } else { None },
        });
    }
    rows.sort_by(|a, b| a.admission_id.cmp(&b.admission_id).then_with(|| a.code.cmp(&b.code)));
    Ok(rows)
}

pub fn write_silver<W: Write>(rows: &[SilverStandardRow], w: W) -> csv::Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(SILVER_HEADER)?;
    for row in rows {
        let (start, end, text) = match &row.source_span {
            Some(s) => (s.start.to_string(), s.end.to_string(), s.text.as_str()),
            None => (String::new(), String::new(), ""),
        };
        out.write_record([
            row.admission_id.as_str(),
            row.code.canonical(),
            row.validated.as_str(),
            &start,
            &end,
            text,
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the silver standard to `path` and returns the rows written.
pub fn emit_silver_standard(
    partition: &[PartitionRecord],
    validation: &ValidationOutcome,
    path: &Path,
) -> Result<Vec<SilverStandardRow>> {
    let rows = silver_rows(partition, validation)?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_silver(&rows, std::io::BufWriter::new(file)).map_err(|e| Error::csv(path, e))?;
    Ok(rows)
}

pub fn read_silver<R: Read>(reader: R, path: &Path) -> Result<Vec<SilverStandardRow>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    for (i, column) in SILVER_HEADER.iter().enumerate() {
        if headers.get(i) != Some(*column) {
            return Err(Error::MissingColumn {
                path: path.to_path_buf(),
                column: column.to_string(),
            });
        }
    }
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let row = (i + 2) as u64;
        let bad = |message: String| Error::MalformedRow {
            path: path.to_path_buf(),
            row,
            message,
        };
        let code = CodeId::parse(&record[1]).map_err(|e| bad(e.to_string()))?;
        let validated = Validated::parse(&record[2]).ok_or_else(|| bad(format!("bad validated value {:?}", &record[2])))?;
        let source_span = match (&record[3], &record[4]) {
            ("", "") => None,
            (s, e) => Some(SpanEvidence {
                start: s.parse().map_err(|_| bad(format!("bad span_start {s:?}")))?,
                end: e.parse().map_err(|_| bad(format!("bad span_end {e:?}")))?,
                text: record[5].to_string(),
            }),
        };
        rows.push(SilverStandardRow {
            admission_id: record[0].to_string(),
            code,
            validated,
            source_span,
        });
    }
    Ok(rows)
}

pub fn load_silver_standard(path: &Path) -> Result<Vec<SilverStandardRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_silver(file, path)
}
