//! Mention recognition and linking.
//!
//! Text is tokenised, dictionary names are matched greedily (longest first),
//! and hits whose name is shared or short are resolved against concept
//! vectors built from surrounding words.

mod linker;
mod matcher;
mod model;
mod tokenize;
mod train;

pub use linker::{annotate_document, disambiguate, link_candidates, EntitySpan, SpanStatus};
pub use matcher::{detect_spans, Candidate};
pub use model::{cosine, ContextModel, ModelConfig};
pub use tokenize::{tokenize, Token};
pub use train::{
    fine_tune, holdout_split, train_unsupervised, AnnotationExample, FineTuneReport, Metrics,
    RejectedAnnotation, TrainStats, HOLDOUT_FRACTION,
};

pub(crate) use model::derive_seed;
