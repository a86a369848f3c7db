//! Rule-based extraction of the discharge-diagnosis subsection.
//!
//! A section starts at the first line whose text (ignoring leading blanks)
//! matches one of the heading rules, case-insensitively, followed by a colon or
//! the end of the line. It ends at the next line that looks like another
//! heading (`Some Heading:` on its own line), at two consecutive blank lines,
//! or at the end of the note. "Primary/Secondary Diagnoses:" sub-headers stay
//! inside the section.

use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{summarize, SummaryStats};

pub const DEFAULT_HEADINGS: [&str; 4] = [
    "discharge diagnosis",
    "discharge diagnoses",
    "final diagnosis",
    "final diagnoses",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteDocument {
    pub note_id: String,
    pub admission_id: String,
    pub category: String,
    pub text: String,
}

/// Extracted section with byte offsets of the body in the note text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionSpan {
    pub heading: String,
    pub start: usize,
    pub end: usize,
    pub body: String,
    pub line_items: Vec<String>,
}

/// Compiled heading rules.
#[derive(Debug, Clone)]
pub struct HeadingRules {
    rules: Vec<String>,
    heading: Regex,
}

impl Default for HeadingRules {
    fn default() -> Self {
        HeadingRules::new(DEFAULT_HEADINGS).expect("default rules compile")
    }
}

impl HeadingRules {
    pub fn new<S: AsRef<str>>(rules: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut rules: Vec<String> = rules
            .into_iter()
            .map(|r| r.as_ref().split_whitespace().collect::<Vec<_>>().join(" "))
            .filter(|r| !r.is_empty())
            .collect();
        if rules.is_empty() {
            return Err(Error::Config("at least one heading rule is required".into()));
        }
        rules.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        rules.dedup();
        let alternatives: Vec<String> = rules
            .iter()
            .map(|r| {
                r.split(' ')
                    .map(regex::escape)
                    .collect::<Vec<_>>()
                    .join(r"[ \t]+")
            })
            .collect();
        let pattern = format!(r"(?im)^[ \t]*({})[ \t]*(?::|\r?$)", alternatives.join("|"));
        let heading = Regex::new(&pattern).map_err(|e| Error::Config(e.to_string()))?;
        Ok(HeadingRules { rules, heading })
    }

    /// One rule per line; blank lines and `#` comments are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn rules(&self) -> &[String] {
        &self.rules
    }
}

fn terminator() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[A-Za-z ]{2,40}:$").unwrap())
}

fn sub_header() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^(primary|secondary)\s+diagnos\w*\s*:?$").unwrap())
}

fn enumeration() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:\d+[.)](?:\s+|$)|#\s*\d*[.)]?\s*|[-*•]\s*)").unwrap())
}

/// Locates the first discharge-diagnosis section of `doc`.
pub fn find_dd_section(doc: &NoteDocument, rules: &HeadingRules) -> Option<SectionSpan> {
    find_section(&doc.text, rules)
}

pub fn find_section(text: &str, rules: &HeadingRules) -> Option<SectionSpan> {
    let m = rules.heading.captures(text)?;
    let heading = m.get(1)?.as_str().to_string();
    let after_heading = m.get(0)?.end();

    // Scan line by line from the heading's line remainder.
    let mut end = text.len();
    let mut blank_run = 0;
    let mut pos = after_heading;
    let mut first_line = true;
    while pos < text.len() {
        let line_end = text[pos..].find('\n').map_or(text.len(), |i| pos + i);
        let line = text[pos..line_end].trim_end_matches('\r');
        let trimmed = line.trim();
        if !first_line {
            if trimmed.is_empty() {
                blank_run += 1;
                if blank_run >= 2 {
                    end = pos;
                    break;
                }
            } else {
                blank_run = 0;
                if terminator().is_match(trimmed) && !sub_header().is_match(trimmed) {
                    end = pos;
                    break;
                }
            }
        }
        first_line = false;
        pos = line_end + 1;
    }

    let region = &text[after_heading..end];
    let lead = region.len() - region.trim_start().len();
    let start = after_heading + lead;
    let end = (after_heading + region.trim_end().len()).max(start);
    let body = text[start..end].to_string();
    let line_items = split_line_items(&body);
    Some(SectionSpan {
        heading,
        start,
        end,
        body,
        line_items,
    })
}

/// Splits a section body into diagnosis lines, removing enumeration prefixes
/// and primary/secondary sub-headers.
pub fn split_line_items(body: &str) -> Vec<String> {
    body.lines()
        .filter_map(|line| {
            let line = line.trim();
            let stripped = enumeration().find(line).map_or(line, |m| &line[m.end()..]).trim();
            if stripped.is_empty() || sub_header().is_match(stripped) {
                None
            } else {
                Some(stripped.to_string())
            }
        })
        .collect()
}

/// Number of maximal alphanumeric runs.
pub fn token_count(text: &str) -> usize {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionStats {
    pub documents: usize,
    pub found: usize,
    pub missing: usize,
    /// Token lengths of the extracted bodies; absent when nothing was found.
    pub token_lengths: Option<SummaryStats>,
}

pub fn corpus_section_stats(docs: &[NoteDocument], rules: &HeadingRules) -> SectionStats {
    let lengths: Vec<f64> = docs
        .iter()
        .filter_map(|d| find_dd_section(d, rules))
        .map(|s| token_count(&s.body) as f64)
        .collect();
    section_stats_from_lengths(docs.len(), &lengths)
}

pub fn section_stats_from_lengths(documents: usize, lengths: &[f64]) -> SectionStats {
    SectionStats {
        documents,
        found: lengths.len(),
        missing: documents - lengths.len(),
        token_lengths: summarize(lengths).ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> NoteDocument {
        NoteDocument {
            note_id: "1".into(),
            admission_id: "100".into(),
            category: "Discharge summary".into(),
            text: text.into(),
        }
    }

    fn section(text: &str) -> Option<SectionSpan> {
        find_dd_section(&doc(text), &HeadingRules::default())
    }

    #[test]
    fn single_item_section() {
        let text = "Brief Hospital Course:\nok\n\nDischarge Diagnosis:\nSeizures.\n\nDischarge Condition:\nstable\n";
        let s = section(text).unwrap();
        assert_eq!(s.body, "Seizures.");
        assert_eq!(&text[s.start..s.end], s.body);
        assert_eq!(s.line_items, ["Seizures."]);
        assert_eq!(s.heading, "Discharge Diagnosis");
    }

    #[test]
    fn missing_section() {
        assert!(section("Discharge Condition:\nstable").is_none());
        assert!(section("").is_none());
        assert!(section("the discharge diagnosis was pneumonia").is_none());
    }

    #[test]
    fn upper_case_heading_with_subheaders() {
        let text = "DISCHARGE DIAGNOSES:\nPrimary Diagnoses:\n1. Acute ST segment Elevation Myocardial Infarction\nSecondary Diagnoses:\n1. Hypertension\n2. Hyperlipidemia\n\nDischarge Condition:\nGood";
        let s = section(text).unwrap();
        assert_eq!(s.heading, "DISCHARGE DIAGNOSES");
        assert_eq!(
            s.line_items,
            ["Acute ST segment Elevation Myocardial Infarction", "Hypertension", "Hyperlipidemia"]
        );
    }

    #[test]
    fn inline_body_and_double_blank_end() {
        let text = "Final Diagnosis: Subdural hematoma\nfall\n\n\nsomething else";
        let s = section(text).unwrap();
        assert_eq!(s.body, "Subdural hematoma\nfall");
        assert_eq!(s.line_items, ["Subdural hematoma", "fall"]);
    }

    #[test]
    fn first_heading_wins() {
        let text = "Discharge Diagnosis:\nA\n\nDischarge Condition:\nx\nFinal Diagnosis:\nB";
        assert_eq!(section(text).unwrap().body, "A");
    }

    #[test]
    fn empty_body() {
        let text = "Discharge Diagnosis:\nDischarge Condition:\nstable";
        let s = section(text).unwrap();
        assert_eq!(s.body, "");
        assert_eq!(s.start, s.end);
        assert!(s.line_items.is_empty());
    }

    #[test]
    fn table_line_items() {
        assert_eq!(split_line_items("Seizures."), ["Seizures."]);
        assert_eq!(
            split_line_items("CAD now s/p CABG\nHTN, DM, Osteoarthritis, Dyslipidemia"),
            ["CAD now s/p CABG", "HTN, DM, Osteoarthritis, Dyslipidemia"]
        );
        assert_eq!(split_line_items("- a\n# b\n#2. c\n* d\n2.5 mg"), ["a", "b", "c", "d", "2.5 mg"]);
        assert!(split_line_items("").is_empty());
    }

    #[test]
    fn custom_rules_from_text() {
        let rules = HeadingRules::from_text("# comment\n\nDiagnoses at discharge\n").unwrap();
        let text = "diagnoses  at DISCHARGE:\nCOPD\n";
        let s = find_section(text, &rules).unwrap();
        assert_eq!(s.body, "COPD");
        assert!(HeadingRules::from_text("# only comments\n").is_err());
    }

    #[test]
    fn stats_over_corpus() {
        let docs = vec![
            doc("Discharge Diagnosis:\nSeizures one two three"),
            doc("Discharge Diagnosis:\na b c d e f g h i j"),
            doc("Discharge Diagnosis:\na b c d e f g h i j"),
            doc("nothing"),
        ];
        let s = corpus_section_stats(&docs, &HeadingRules::default());
        assert_eq!((s.found, s.missing), (3, 1));
        let t = s.token_lengths.unwrap();
        assert_eq!((t.mean, t.median), (8.0, 10.0));
    }

    #[test]
    fn token_count_rule() {
        assert_eq!(token_count("s/p CABG, HTN"), 4);
        assert_eq!(token_count(""), 0);
    }
}
