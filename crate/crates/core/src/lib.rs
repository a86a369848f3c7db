//! Coding-completeness audit for discharge summaries.
//!
//! The crate extracts the discharge-diagnosis subsection from free-text notes,
//! recognises diagnosis mentions and links them to ICD-9-CM codes through a
//! concept dictionary plus context vectors, reconciles the predicted codes with
//! the codes that were actually assigned, and produces audit statistics and a
//! silver-standard coding table.
//!
//! Module map:
//!
//! * [`taxonomy`]: ICD-9 codes, chapters and the concept dictionary.
//! * [`sectioner`]: rule-based discharge-diagnosis extraction.
//! * [`ner`]: tokenisation, dictionary matching, context-vector disambiguation
//!   and training.
//! * [`audit`]: predicted/assigned partitioning and the audit report.
//! * [`stats`]: Wasserstein, Pearson, Cohen's kappa and summary statistics.
//! * [`corpus`]: CSV ingestion, synthetic corpora and silver-standard output.
//! * [`annotation`]: validation sessions for the human-in-the-loop review.
//! * [`pipeline`]: file-based stages tying everything together.

pub mod annotation;
pub mod audit;
pub mod corpus;
pub mod error;
pub mod ner;
pub mod pipeline;
pub mod sectioner;
pub mod stats;
pub mod taxonomy;

pub use error::{Error, Result};
