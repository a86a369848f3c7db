//! Reconciliation of predicted and assigned codes.
//!
//! Within the audited scope every (admission, code) pair that is predicted or
//! assigned falls into exactly one bucket: predicted and assigned (`P_A`),
//! predicted but not assigned (`P_NA`), or assigned but not predicted
//! (`A_NP`). Codes are compared by exact canonical equality.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ner::EntitySpan;
use crate::stats::{chapter_distribution, pearson, summarize, wasserstein_1d, SummaryStats};
use crate::taxonomy::{chapter_of, CodeId, CHAPTERS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Bucket {
    #[serde(rename = "P_A")]
    PredictedAssigned,
    #[serde(rename = "P_NA")]
    PredictedNotAssigned,
    #[serde(rename = "A_NP")]
    AssignedNotPredicted,
}

impl Bucket {
    pub fn as_str(self) -> &'static str {
        match self {
            Bucket::PredictedAssigned => "P_A",
            Bucket::PredictedNotAssigned => "P_NA",
            Bucket::AssignedNotPredicted => "A_NP",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "P_A" => Some(Bucket::PredictedAssigned),
            "P_NA" => Some(Bucket::PredictedNotAssigned),
            "A_NP" => Some(Bucket::AssignedNotPredicted),
            _ => None,
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-admission facts about the extracted discharge-diagnosis section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DdFacts {
    pub line_count: usize,
    pub char_length: usize,
    pub token_length: usize,
    /// Share of non-whitespace body characters covered by accepted spans.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdmissionCodes {
    pub admission_id: String,
    pub assigned: BTreeSet<CodeId>,
    /// Predicted codes with the spans that support them.
    pub predicted: BTreeMap<CodeId, Vec<EntitySpan>>,
    /// `None` when the note had no discharge-diagnosis section.
    pub dd: Option<DdFacts>,
}

impl AdmissionCodes {
    /// Groups accepted spans by every code of their concept.
    pub fn from_spans(
        admission_id: &str,
        assigned: BTreeSet<CodeId>,
        spans: &[EntitySpan],
        dd: Option<DdFacts>,
    ) -> Self {
        let mut predicted: BTreeMap<CodeId, Vec<EntitySpan>> = BTreeMap::new();
        for span in spans.iter().filter(|s| s.is_accepted()) {
            for code in &span.codes {
                predicted.entry(code.clone()).or_default().push(span.clone());
            }
        }
        AdmissionCodes {
            admission_id: admission_id.to_string(),
            assigned,
            predicted,
            dd,
        }
    }
}

/// Text evidence behind a predicted code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanEvidence {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionRecord {
    pub admission_id: String,
    pub code: CodeId,
    pub bucket: Bucket,
    /// First supporting span for predicted buckets.
    pub evidence: Option<SpanEvidence>,
}

/// Splits every admission's in-scope codes into the three buckets. Output is
/// ordered by admission id, then code.
pub fn partition(admissions: &[AdmissionCodes], scope: &BTreeSet<CodeId>) -> Vec<PartitionRecord> {
    let mut ordered: Vec<&AdmissionCodes> = admissions.iter().collect();
    ordered.sort_by(|a, b| a.admission_id.cmp(&b.admission_id));
    let mut out = Vec::new();
    for adm in ordered {
        let predicted: BTreeSet<&CodeId> = adm.predicted.keys().filter(|c| scope.contains(*c)).collect();
        let assigned: BTreeSet<&CodeId> = adm.assigned.iter().filter(|c| scope.contains(*c)).collect();
        for code in predicted.union(&assigned) {
            let bucket = match (predicted.contains(code), assigned.contains(code)) {
                (true, true) => Bucket::PredictedAssigned,
                (true, false) => Bucket::PredictedNotAssigned,
                _ => Bucket::AssignedNotPredicted,
            };
            let evidence = adm.predicted.get(*code).and_then(|spans| spans.first()).map(|s| SpanEvidence {
                start: s.start,
                end: s.end,
                text: s.surface.clone(),
            });
            out.push(PartitionRecord {
                admission_id: adm.admission_id.clone(),
                code: (*code).clone(),
                bucket,
                evidence,
            });
        }
    }
    out
}

/// Fraction of non-whitespace characters of `body` inside at least one span.
/// Span offsets are byte offsets into `body`.
pub fn coverage_fraction(body: &str, spans: &[EntitySpan]) -> f64 {
    let ranges: Vec<(usize, usize)> = spans.iter().map(|s| (s.start, s.end)).collect();
    coverage_of_ranges(body, &ranges)
}

pub fn coverage_of_ranges(body: &str, ranges: &[(usize, usize)]) -> f64 {
    let mut covered = vec![false; body.len()];
    for &(start, end) in ranges {
        let end = end.min(body.len());
        for flag in covered.iter_mut().take(end).skip(start) {
            *flag = true;
        }
    }
    let (mut total, mut hit) = (0usize, 0usize);
    for (i, ch) in body.char_indices() {
        if ch.is_whitespace() {
            continue;
        }
        total += 1;
        if covered[i] {
            hit += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinCount {
    pub bin: String,
    pub count: u64,
}

/// Ten 10%-wide bins `[0,10%) … [90,100%)` plus a separate bin for exactly 100%.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoverageHistogram {
    pub bins: [u64; 10],
    pub full: u64,
}

impl CoverageHistogram {
    pub fn total(&self) -> u64 {
        self.bins.iter().sum::<u64>() + self.full
    }

    pub fn rows(&self) -> Vec<BinCount> {
        let mut rows: Vec<BinCount> = self
            .bins
            .iter()
            .enumerate()
            .map(|(i, &count)| BinCount {
                bin: format!("[{},{})", i * 10, i * 10 + 10),
                count,
            })
            .collect();
        rows.push(BinCount {
            bin: "100".into(),
            count: self.full,
        });
        rows
    }
}

pub fn coverage_histogram(fractions: &[f64]) -> CoverageHistogram {
    let mut hist = CoverageHistogram::default();
    for &f in fractions {
        if f >= 1.0 {
            hist.full += 1;
        } else {
            let bin = ((f * 10.0 + 1e-9).floor().max(0.0) as usize).min(9);
            hist.bins[bin] += 1;
        }
    }
    hist
}

/// Admissions bucketed by matched share of their in-scope assigned codes,
/// over `(0,10%] … (90,100%]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchBuckets {
    pub buckets: Vec<BinCount>,
    pub excluded_zero_matches: u64,
    pub excluded_no_scoped_codes: u64,
}

pub fn match_proportion_buckets(admissions: &[AdmissionCodes], partition: &[PartitionRecord], scope: &BTreeSet<CodeId>) -> MatchBuckets {
    let mut matched: BTreeMap<&str, u64> = BTreeMap::new();
    for r in partition.iter().filter(|r| r.bucket == Bucket::PredictedAssigned) {
        *matched.entry(r.admission_id.as_str()).or_default() += 1;
    }
    let mut counts = [0u64; 10];
    let mut out = MatchBuckets::default();
    for adm in admissions {
        let assigned = adm.assigned.iter().filter(|c| scope.contains(*c)).count() as u64;
        if assigned == 0 {
            out.excluded_no_scoped_codes += 1;
            continue;
        }
        let m = matched.get(adm.admission_id.as_str()).copied().unwrap_or(0);
        if m == 0 {
            out.excluded_zero_matches += 1;
            continue;
        }
        // ceil(10·m/n) − 1 in integers, so 30% lands in (20,30].
        let idx = ((10 * m).div_ceil(assigned) - 1).min(9) as usize;
        counts[idx] += 1;
    }
    out.buckets = counts
        .iter()
        .enumerate()
        .map(|(i, &count)| BinCount {
            bin: format!("({},{}]", i * 10, i * 10 + 10),
            count,
        })
        .collect();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MissingRate {
    Rate(f64),
    /// Predicted but never assigned within scope.
    NewOnly,
}

impl MissingRate {
    pub fn rate(self) -> Option<f64> {
        match self {
            MissingRate::Rate(r) => Some(r),
            MissingRate::NewOnly => None,
        }
    }
}

/// `P_NA` occurrences of a code divided by its assigned occurrences.
pub fn per_code_missing_rate(partition: &[PartitionRecord], assigned_counts: &BTreeMap<CodeId, u64>) -> BTreeMap<CodeId, MissingRate> {
    let mut p_na: BTreeMap<&CodeId, u64> = BTreeMap::new();
    for r in partition.iter().filter(|r| r.bucket == Bucket::PredictedNotAssigned) {
        *p_na.entry(&r.code).or_default() += 1;
    }
    let codes: BTreeSet<&CodeId> = p_na.keys().copied().chain(assigned_counts.keys()).collect();
    codes
        .into_iter()
        .map(|code| {
            let missing = p_na.get(code).copied().unwrap_or(0);
            let assigned = assigned_counts.get(code).copied().unwrap_or(0);
            let rate = if assigned == 0 {
                MissingRate::NewOnly
            } else {
                MissingRate::Rate(missing as f64 / assigned as f64)
            };
            (code.clone(), rate)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerCodeRow {
    pub code: CodeId,
    pub display: String,
    pub chapter: String,
    pub assigned: u64,
    pub p_a: u64,
    pub p_na: u64,
    pub a_np: u64,
    pub missing_rate: Option<f64>,
    pub new_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChapterTable {
    pub labels: Vec<String>,
    pub assigned: Vec<f64>,
    pub p_a: Vec<f64>,
    pub p_na: Vec<f64>,
    pub a_np: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    /// Line items vs. number of assigned codes, over admissions with a section.
    pub dd_lines_vs_assigned: Option<f64>,
    /// Line items vs. number of `P_NA` codes.
    pub dd_lines_vs_p_na: Option<f64>,
}

/// Distances of each bucket's chapter distribution from the assigned one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distances {
    pub p_a: Option<f64>,
    pub p_na: Option<f64>,
    pub a_np: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummaries {
    pub dd_token_length: Option<SummaryStats>,
    pub codes_per_dd: Option<SummaryStats>,
    pub coverage: Option<SummaryStats>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub admissions: u64,
    pub admissions_with_dd: u64,
    pub scope_codes: u64,
    pub assigned_in_scope: u64,
    pub p_a: u64,
    pub p_na: u64,
    pub a_np: u64,
    /// Codes with at least one `P_A` record, and their aggregates.
    pub matched_codes: u64,
    pub assigned_for_matched_codes: u64,
    pub p_na_for_matched_codes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub per_code: Vec<PerCodeRow>,
    pub chapters: ChapterTable,
    pub coverage_hist: Vec<BinCount>,
    pub match_buckets: MatchBuckets,
    pub correlations: Correlations,
    pub wasserstein: Distances,
    pub summary_stats: ReportSummaries,
    pub totals: Totals,
}

impl AuditReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn per_code_csv(&self) -> String {
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        wtr.write_record(["code", "display", "chapter", "assigned", "p_a", "p_na", "a_np", "missing_rate", "new_only"])
            .expect("in-memory write");
        for row in &self.per_code {
            wtr.write_record([
                row.code.canonical().to_string(),
                row.display.clone(),
                row.chapter.clone(),
                row.assigned.to_string(),
                row.p_a.to_string(),
                row.p_na.to_string(),
                row.a_np.to_string(),
                row.missing_rate.map(|r| r.to_string()).unwrap_or_default(),
                row.new_only.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(wtr.into_inner().expect("flush")).expect("utf-8")
    }
}

pub fn build_report(admissions: &[AdmissionCodes], partition: &[PartitionRecord], scope: &BTreeSet<CodeId>) -> AuditReport {
    let mut ordered: Vec<&AdmissionCodes> = admissions.iter().collect();
    ordered.sort_by(|a, b| a.admission_id.cmp(&b.admission_id));

    #[derive(Default)]
    struct Counts {
        p_a: u64,
        p_na: u64,
        a_np: u64,
    }
    let mut per_code: BTreeMap<&CodeId, Counts> = BTreeMap::new();
    let mut by_bucket: BTreeMap<Bucket, Vec<&CodeId>> = BTreeMap::new();
    let mut p_na_per_adm: BTreeMap<&str, u64> = BTreeMap::new();
    for r in partition {
        let c = per_code.entry(&r.code).or_default();
        match r.bucket {
            Bucket::PredictedAssigned => c.p_a += 1,
            Bucket::PredictedNotAssigned => {
                c.p_na += 1;
                *p_na_per_adm.entry(r.admission_id.as_str()).or_default() += 1;
            }
            Bucket::AssignedNotPredicted => c.a_np += 1,
        }
        by_bucket.entry(r.bucket).or_default().push(&r.code);
    }
    let assigned_counts: BTreeMap<CodeId, u64> = per_code
        .iter()
        .map(|(code, c)| ((*code).clone(), c.p_a + c.a_np))
        .filter(|(_, n)| *n > 0)
        .collect();
    let rates = per_code_missing_rate(partition, &assigned_counts);

    let rows: Vec<PerCodeRow> = per_code
        .iter()
        .map(|(code, c)| {
            let rate = rates.get(*code).copied().unwrap_or(MissingRate::Rate(0.0));
            PerCodeRow {
                code: (*code).clone(),
                display: code.display(),
                chapter: chapter_of(code).range(),
                assigned: c.p_a + c.a_np,
                p_a: c.p_a,
                p_na: c.p_na,
                a_np: c.a_np,
                missing_rate: rate.rate(),
                new_only: rate == MissingRate::NewOnly,
            }
        })
        .collect();

    let empty: Vec<&CodeId> = Vec::new();
    let bucket_codes = |b: Bucket| by_bucket.get(&b).unwrap_or(&empty);
    let assigned_codes: Vec<&CodeId> = bucket_codes(Bucket::PredictedAssigned)
        .iter()
        .chain(bucket_codes(Bucket::AssignedNotPredicted))
        .copied()
        .collect();
    let dist_assigned = chapter_distribution(assigned_codes.iter().copied());
    let dist_p_a = chapter_distribution(bucket_codes(Bucket::PredictedAssigned).iter().copied());
    let dist_p_na = chapter_distribution(bucket_codes(Bucket::PredictedNotAssigned).iter().copied());
    let dist_a_np = chapter_distribution(bucket_codes(Bucket::AssignedNotPredicted).iter().copied());
    let distance = |d| wasserstein_1d(d, &dist_assigned).ok();

    let with_dd: Vec<(&AdmissionCodes, DdFacts)> = ordered.iter().filter_map(|a| a.dd.map(|d| (*a, d))).collect();
    let lines: Vec<f64> = with_dd.iter().map(|(_, d)| d.line_count as f64).collect();
    let assigned_per: Vec<f64> = with_dd.iter().map(|(a, _)| a.assigned.len() as f64).collect();
    let p_na_per: Vec<f64> = with_dd
        .iter()
        .map(|(a, _)| p_na_per_adm.get(a.admission_id.as_str()).copied().unwrap_or(0) as f64)
        .collect();
    let codes_per_dd: Vec<f64> = with_dd
        .iter()
        .map(|(a, _)| a.predicted.keys().filter(|c| scope.contains(*c)).count() as f64)
        .collect();
    let token_lengths: Vec<f64> = with_dd.iter().map(|(_, d)| d.token_length as f64).collect();
    let coverage: Vec<f64> = with_dd.iter().map(|(_, d)| d.coverage).collect();

    let matched: BTreeSet<&CodeId> = per_code.iter().filter(|(_, c)| c.p_a > 0).map(|(k, _)| *k).collect();
    let totals = Totals {
        admissions: ordered.len() as u64,
        admissions_with_dd: with_dd.len() as u64,
        scope_codes: scope.len() as u64,
        assigned_in_scope: assigned_codes.len() as u64,
        p_a: bucket_codes(Bucket::PredictedAssigned).len() as u64,
        p_na: bucket_codes(Bucket::PredictedNotAssigned).len() as u64,
        a_np: bucket_codes(Bucket::AssignedNotPredicted).len() as u64,
        matched_codes: matched.len() as u64,
        assigned_for_matched_codes: matched.iter().map(|c| per_code[*c].p_a + per_code[*c].a_np).sum(),
        p_na_for_matched_codes: matched.iter().map(|c| per_code[*c].p_na).sum(),
    };

    AuditReport {
        per_code: rows,
        chapters: ChapterTable {
            labels: CHAPTERS.iter().map(|c| c.range()).collect(),
            assigned: dist_assigned.probabilities.clone(),
            p_a: dist_p_a.probabilities.clone(),
            p_na: dist_p_na.probabilities.clone(),
            a_np: dist_a_np.probabilities.clone(),
        },
        coverage_hist: coverage_histogram(&coverage).rows(),
        match_buckets: match_proportion_buckets(admissions, partition, scope),
        correlations: Correlations {
            dd_lines_vs_assigned: pearson(&lines, &assigned_per).ok(),
            dd_lines_vs_p_na: pearson(&lines, &p_na_per).ok(),
        },
        wasserstein: Distances {
            p_a: distance(&dist_p_a),
            p_na: distance(&dist_p_na),
            a_np: distance(&dist_a_np),
        },
        summary_stats: ReportSummaries {
            dd_token_length: summarize(&token_lengths).ok(),
            codes_per_dd: summarize(&codes_per_dd).ok(),
            coverage: summarize(&coverage).ok(),
        },
        totals,
    }
}
