//! Statistical primitives for the audit report.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{chapter_of, CodeId, CHAPTER_COUNT};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty distribution")]
    EmptyDistribution,
    #[error("bin count mismatch: {0} vs {1}")]
    BinMismatch(usize, usize),
    #[error("correlation undefined for a constant series")]
    ConstantSeries,
    #[error("kappa undefined: chance agreement is 1")]
    KappaUndefined,
    #[error("need at least {0} values")]
    TooShort(usize),
}

/// Normalised chapter histogram. An all-zero vector marks the empty distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChapterDistribution {
    pub probabilities: Vec<f64>,
    pub total: u64,
}

impl ChapterDistribution {
    pub fn from_probabilities(probabilities: Vec<f64>) -> Self {
        ChapterDistribution {
            total: u64::from(probabilities.iter().any(|p| *p > 0.0)),
            probabilities,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }
}

pub fn chapter_distribution<'a>(codes: impl IntoIterator<Item = &'a CodeId>) -> ChapterDistribution {
    let mut counts = [0u64; CHAPTER_COUNT];
    for code in codes {
        counts[chapter_of(code).ordinal] += 1;
    }
    let total: u64 = counts.iter().sum();
    let probabilities = counts
        .iter()
        .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect();
    ChapterDistribution { probabilities, total }
}

/// First Wasserstein distance between two histograms on ordinal bins with
/// unit spacing: the L1 distance between their cumulative sums.
pub fn wasserstein_1d(p: &ChapterDistribution, q: &ChapterDistribution) -> Result<f64, StatsError> {
    if p.is_empty() || q.is_empty() {
        return Err(StatsError::EmptyDistribution);
    }
    wasserstein_bins(&p.probabilities, &q.probabilities)
}

/// [`wasserstein_1d`] over raw probability vectors.
pub fn wasserstein_bins(p: &[f64], q: &[f64]) -> Result<f64, StatsError> {
    if p.len() != q.len() {
        return Err(StatsError::BinMismatch(p.len(), q.len()));
    }
    let (mut cdf_p, mut cdf_q, mut total) = (0.0, 0.0, 0.0);
    for (a, b) in p.iter().zip(q) {
        cdf_p += a;
        cdf_q += b;
        total += f64::abs(cdf_p - cdf_q);
    }
    Ok(total)
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooShort(2));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ConstantSeries);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 2×2 agreement table: `both_yes`, `a_yes_b_no`, `a_no_b_yes`, `both_no`.
pub fn kappa_from_table(both_yes: u64, a_yes_b_no: u64, a_no_b_yes: u64, both_no: u64) -> Result<f64, StatsError> {
    let n = (both_yes + a_yes_b_no + a_no_b_yes + both_no) as f64;
    if n == 0.0 {
        return Err(StatsError::Empty);
    }
    let p_o = (both_yes + both_no) as f64 / n;
    let a_yes = (both_yes + a_yes_b_no) as f64 / n;
    let b_yes = (both_yes + a_no_b_yes) as f64 / n;
    let p_e = a_yes * b_yes + (1.0 - a_yes) * (1.0 - b_yes);
    if p_e >= 1.0 {
        return Err(StatsError::KappaUndefined);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

pub fn cohens_kappa(marks_a: &[bool], marks_b: &[bool]) -> Result<f64, StatsError> {
    if marks_a.len() != marks_b.len() {
        return Err(StatsError::LengthMismatch(marks_a.len(), marks_b.len()));
    }
    let mut table = [0u64; 4];
    for (&a, &b) in marks_a.iter().zip(marks_b) {
        let cell = match (a, b) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        table[cell] += 1;
    }
    kappa_from_table(table[0], table[1], table[2], table[3])
}

/// Mean, population standard deviation, median and interquartile range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub iqr: f64,
}

/// Quantile by linear interpolation between order statistics of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Result<SummaryStats, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(SummaryStats {
        count: values.len(),
        mean,
        std: var.sqrt(),
        median: quantile_sorted(&sorted, 0.5),
        iqr: quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25),
    })
}
