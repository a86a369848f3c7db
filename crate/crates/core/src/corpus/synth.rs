//! Seeded synthetic corpus with planted diagnoses and under-coding.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::{Assignment, CorpusBundle, DISCHARGE_CATEGORY};
use super::vocabulary::{default_vocabulary, SynthCode};
use crate::error::{Error, Result};
use crate::ner::derive_seed;
use crate::sectioner::NoteDocument;
use crate::taxonomy::CodeId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_admissions: usize,
    pub code_vocabulary: Vec<SynthCode>,
    /// Probability that a present code is left out of the assignments.
    pub undercode_rate: f64,
    /// Probability that a diagnosis is written with a synonym.
    pub synonym_noise_rate: f64,
    pub seed: u64,
    pub min_codes: usize,
    pub max_codes: usize,
    /// Probability that a note has no discharge-diagnosis section.
    pub missing_section_rate: f64,
    /// Upper bound on assigned codes that are not written in the section.
    pub max_unlisted: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_admissions: 500,
            code_vocabulary: default_vocabulary(),
            undercode_rate: 0.0,
            synonym_noise_rate: 0.0,
            seed: 42,
            min_codes: 1,
            max_codes: 8,
            missing_section_rate: 0.0,
            max_unlisted: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be in [0, 1), got {v}")))
            }
        };
        unit("undercode_rate", self.undercode_rate)?;
        unit("synonym_noise_rate", self.synonym_noise_rate)?;
        unit("missing_section_rate", self.missing_section_rate)?;
        if self.code_vocabulary.is_empty() {
            return Err(Error::Config("code vocabulary is empty".into()));
        }
        let distinct: BTreeSet<&CodeId> = self.code_vocabulary.iter().map(|c| &c.code).collect();
        if distinct.len() != self.code_vocabulary.len() {
            return Err(Error::Config("code vocabulary repeats a code".into()));
        }
        if self.min_codes == 0 || self.min_codes > self.max_codes {
            return Err(Error::Config(format!(
                "invalid codes per admission range {}..={}",
                self.min_codes, self.max_codes
            )));
        }
        Ok(())
    }
}

/// What was planted for one admission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissionTruth {
    /// Codes written in the discharge-diagnosis section, in order.
    pub listed: Vec<CodeId>,
    /// Listed codes left out of the assignments.
    pub omitted: BTreeSet<CodeId>,
    /// Assigned codes that the section does not mention.
    pub unlisted: Vec<CodeId>,
    pub has_section: bool,
    pub dd_lines: usize,
}

impl AdmissionTruth {
    /// Every code truly present for the admission.
    pub fn full_codes(&self) -> BTreeSet<CodeId> {
        self.listed.iter().chain(&self.unlisted).cloned().collect()
    }
}

pub type GroundTruth = BTreeMap<String, AdmissionTruth>;

pub fn admission_id(index: usize) -> String {
    (100_001 + index).to_string()
}

const HEADINGS: [&str; 5] = [
    "Discharge Diagnosis:",
    "Discharge Diagnoses:",
    "DISCHARGE DIAGNOSES:",
    "Final Diagnosis:",
    "Discharge diagnosis:",
];

const COMPLAINTS: [&str; 8] = [
    "shortness of breath",
    "chest pain",
    "fever and chills",
    "altered mental status",
    "abdominal pain",
    "weakness",
    "a fall at home",
    "palpitations",
];

const COURSE: [&str; 8] = [
    "Patient was admitted to the floor and monitored on telemetry.",
    "Labs were notable for a mild leukocytosis that resolved.",
    "Cultures were drawn and empiric antibiotics were started.",
    "Home medications were continued with minor adjustments.",
    "Physical therapy evaluated the patient prior to discharge.",
    "Electrolytes were repleted as needed.",
    "The patient remained hemodynamically stable throughout the stay.",
    "Imaging showed no acute process.",
];

const MEDICATIONS: [&str; 8] = [
    "Aspirin 81 mg PO daily",
    "Metoprolol tartrate 25 mg PO BID",
    "Atorvastatin 40 mg PO daily",
    "Lisinopril 10 mg PO daily",
    "Furosemide 20 mg PO daily",
    "Pantoprazole 40 mg PO Q24H",
    "Levothyroxine 50 mcg PO daily",
    "Acetaminophen 650 mg PO Q6H PRN pain",
];

#[derive(Clone, Copy)]
enum Enumeration {
    Numbered,
    Paren,
    Dash,
    Plain,
}

impl Enumeration {
    fn prefix(self, n: usize) -> String {
        match self {
            Enumeration::Numbered => format!("{n}. "),
            Enumeration::Paren => format!("{n}) "),
            Enumeration::Dash => "- ".into(),
            Enumeration::Plain => String::new(),
        }
    }
}

fn sample_codes<'a>(rng: &mut ChaCha8Rng, vocab: &'a [SynthCode], n: usize) -> Vec<&'a SynthCode> {
    let weighted: Vec<(usize, &SynthCode)> = vocab.iter().enumerate().collect();
    let mut chosen: Vec<&SynthCode> = weighted
        .choose_multiple_weighted(rng, n, |(rank, _)| 1.0 / ((*rank + 1) as f64).sqrt())
        .expect("weights are positive")
        .map(|(_, c)| *c)
        .collect();
    chosen.shuffle(rng);
    chosen
}

fn name_form<'a>(rng: &mut ChaCha8Rng, code: &'a SynthCode, noise: f64) -> &'a str {
    if !code.synonyms.is_empty() && rng.gen_bool(noise) {
        code.synonyms.choose(rng).expect("non-empty")
    } else {
        &code.preferred
    }
}

/// Renders section lines; returns the text and the number of item lines.
fn render_section(rng: &mut ChaCha8Rng, names: &[&str]) -> (String, usize) {
    let style = *[
        Enumeration::Numbered,
        Enumeration::Paren,
        Enumeration::Dash,
        Enumeration::Plain,
    ]
    .choose(rng)
    .expect("non-empty");
    let mut groups: Vec<Vec<&str>> = Vec::new();
    for name in names {
        match groups.last_mut() {
            Some(last) if rng.gen_bool(0.15) => last.push(name),
            _ => groups.push(vec![name]),
        }
    }
    let split = groups.len() >= 2 && rng.gen_bool(0.3);
    let mut out = String::new();
    let mut n = 0;
    for (i, group) in groups.iter().enumerate() {
        if split && i == 0 {
            out.push_str("Primary Diagnosis:\n");
        }
        if split && i == 1 {
            out.push_str("Secondary Diagnoses:\n");
            n = 0;
        }
        n += 1;
        out.push_str(&style.prefix(n));
        out.push_str(&group.join(", "));
        out.push('\n');
    }
    (out, groups.len())
}

fn generate_admission(config: &SynthConfig, index: usize) -> (NoteDocument, Vec<Assignment>, AdmissionTruth) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("admission:{index}")));
    let vocab = &config.code_vocabulary;
    let hi = config.max_codes.min(vocab.len());
    let lo = config.min_codes.min(hi);
    let n = rng.gen_range(lo..=hi);
    let chosen = sample_codes(&mut rng, vocab, n);

    let listed_set: BTreeSet<&CodeId> = chosen.iter().map(|c| &c.code).collect();
    let n_unlisted = rng.gen_range(0..=config.max_unlisted);
    let mut pool: Vec<&SynthCode> = vocab.iter().filter(|c| !listed_set.contains(&c.code)).collect();
    pool.shuffle(&mut rng);
    let unlisted: Vec<CodeId> = pool.iter().take(n_unlisted).map(|c| c.code.clone()).collect();

    let names: Vec<&str> = chosen
        .iter()
        .map(|c| name_form(&mut rng, c, config.synonym_noise_rate))
        .collect();
    let has_section = !rng.gen_bool(config.missing_section_rate);
    let (section, dd_lines) = render_section(&mut rng, &names);

    let complaint = COMPLAINTS.choose(&mut rng).expect("non-empty");
    let age = rng.gen_range(25..95);
    let sex = if rng.gen_bool(0.5) { "man" } else { "woman" };
    let mut text = format!(
        "Admission Date:  [**2150-1-{day}**]   Discharge Date: [**2150-1-{out}**]\n\n\
         Service: MEDICINE\n\nChief Complaint:\n{complaint}\n\n\
         History of Present Illness:\n{age} year old {sex} presenting with {complaint}.\n\n",
        day = 1 + index % 20,
        out = 3 + index % 20,
    );
    let history: Vec<&str> = vocab
        .choose_multiple(&mut rng, 2)
        .map(|c| c.preferred.as_str())
        .collect();
    text.push_str(&format!("Past Medical History:\n{}\n\n", history.join(", ")));
    text.push_str("Brief Hospital Course:\n");
    let course: Vec<&str> = COURSE.choose_multiple(&mut rng, 3).copied().collect();
    text.push_str(&course.join(" "));
    text.push_str("\n\nDischarge Medications:\n");
    for (i, med) in MEDICATIONS.choose_multiple(&mut rng, 3).enumerate() {
        text.push_str(&format!("{}. {med}\n", i + 1));
    }
    text.push_str("\nDischarge Disposition:\nHome\n\n");
    if has_section {
        text.push_str(HEADINGS.choose(&mut rng).expect("non-empty"));
        text.push('\n');
        text.push_str(&section);
        text.push('\n');
    }
    text.push_str("Discharge Condition:\nStable.\n\nFollowup Instructions:\nPCP in 1 week.\n");

    let id = admission_id(index);
    let mut omitted = BTreeSet::new();
    let mut assignments = Vec::new();
    let mut seq = 0;
    for c in &chosen {
        if rng.gen_bool(config.undercode_rate) {
            omitted.insert(c.code.clone());
        } else {
            seq += 1;
            assignments.push(Assignment {
                admission_id: id.clone(),
                seq_num: seq,
                code: c.code.clone(),
            });
        }
    }
    for code in &unlisted {
        seq += 1;
        assignments.push(Assignment {
            admission_id: id.clone(),
            seq_num: seq,
            code: code.clone(),
        });
    }

    let note = NoteDocument {
        note_id: (index + 1).to_string(),
        admission_id: id,
        category: DISCHARGE_CATEGORY.to_string(),
        text,
    };
    let truth = AdmissionTruth {
        listed: chosen.iter().map(|c| c.code.clone()).collect(),
        omitted,
        unlisted,
        has_section,
        dd_lines: if has_section { dd_lines } else { 0 },
    };
    (note, assignments, truth)
}

/// Generates notes, assignments and the planted truth. Each admission draws
/// from its own seeded stream, so output does not depend on thread count.
pub fn generate_synthetic(config: &SynthConfig) -> Result<(CorpusBundle, GroundTruth)> {
    config.validate()?;
    let rows: Vec<_> = (0..config.n_admissions)
        .into_par_iter()
        .map(|i| generate_admission(config, i))
        .collect();
    let mut notes = Vec::with_capacity(rows.len());
    let mut assignments = Vec::new();
    let mut truth = GroundTruth::new();
    for (note, assigned, t) in rows {
        truth.insert(note.admission_id.clone(), t);
        notes.push(note);
        assignments.extend(assigned);
    }
    Ok((CorpusBundle { notes, assignments }, truth))
}

/// CSV with one row per truly present code.
pub fn write_ground_truth<W: Write>(truth: &GroundTruth, w: W) -> csv::Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(["admission_id", "code", "listed", "assigned"])?;
    for (id, t) in truth {
        for code in t.full_codes() {
            let listed = t.listed.contains(&code) && t.has_section;
            let assigned = !t.omitted.contains(&code);
            out.write_record([id.as_str(), code.canonical(), bool_str(listed), bool_str(assigned)])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn save_ground_truth(truth: &GroundTruth, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_ground_truth(truth, std::io::BufWriter::new(file)).map_err(|e| Error::csv(path, e))
}

fn bool_str(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sectioner::{find_dd_section, HeadingRules};

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_admissions: 50,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn clean_assignments_equal_truth() {
        let (bundle, truth) = generate_synthetic(&small(1)).unwrap();
        let assigned = bundle.assigned_by_admission();
        for (id, t) in &truth {
            let got: BTreeSet<CodeId> = assigned[id].iter().cloned().collect();
            assert_eq!(got, t.full_codes());
            assert!(t.omitted.is_empty());
        }
        assert_eq!(bundle.notes.len(), 50);
        assert!(bundle.orphan_admissions().is_empty());
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let a = generate_synthetic(&small(9)).unwrap();
        let b = generate_synthetic(&small(9)).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&small(10)).unwrap();
        assert_ne!(a.0.notes, c.0.notes);
    }

    #[test]
    fn sections_are_planted() {
        let (bundle, truth) = generate_synthetic(&small(3)).unwrap();
        let rules = HeadingRules::default();
        for note in &bundle.notes {
            let section = find_dd_section(note, &rules).expect("planted section");
            assert_eq!(section.line_items.len(), truth[&note.admission_id].dd_lines);
            assert!(!section.body.contains("mg PO"));
        }
    }

    #[test]
    fn seq_nums_start_at_one() {
        let config = SynthConfig {
            undercode_rate: 0.5,
            max_unlisted: 2,
            ..small(4)
        };
        let (bundle, _) = generate_synthetic(&config).unwrap();
        let mut last: BTreeMap<&str, u32> = BTreeMap::new();
        for a in &bundle.assignments {
            let prev = last.insert(&a.admission_id, a.seq_num).unwrap_or(0);
            assert_eq!(a.seq_num, prev + 1);
        }
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            SynthConfig { undercode_rate: 1.0, ..small(0) },
            SynthConfig { synonym_noise_rate: -0.1, ..small(0) },
            SynthConfig { code_vocabulary: vec![], ..small(0) },
            SynthConfig { min_codes: 0, ..small(0) },
        ];
        for config in bad {
            assert!(generate_synthetic(&config).is_err());
        }
    }
}
