//! Corpus ingestion, synthetic generation and silver-standard output.

mod io;
mod silver;
mod synth;
mod vocabulary;

pub use io::{
    group_assignments, load_assignments, load_notes, notes_by_admission, read_assignments, read_notes,
    save_assignments, save_notes, write_assignments, write_notes, Assignment, AssignmentLoad, CorpusBundle,
    NotesLoad, RejectedRow, DISCHARGE_CATEGORY,
};
pub use silver::{
    emit_silver_standard, load_silver_standard, read_silver, silver_rows, write_silver, SilverStandardRow,
    Validated, ValidationOutcome, SILVER_HEADER,
};
pub use synth::{
    admission_id, generate_synthetic, save_ground_truth, write_ground_truth, AdmissionTruth, GroundTruth,
    SynthConfig,
};
pub use vocabulary::{concept_id_for, default_vocabulary, vocabulary_dictionary, SynthCode};
