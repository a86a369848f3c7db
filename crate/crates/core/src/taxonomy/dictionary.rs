use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::code::CodeId;
use crate::error::{Error, Result};
use crate::ner::tokenize;

/// One surface form of a concept together with its normalised token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameForm {
    pub surface: String,
    pub normalized: Vec<String>,
}

impl NameForm {
    pub fn new(surface: &str) -> Result<Self> {
        let normalized = normalize_name(surface);
        if normalized.is_empty() {
            return Err(Error::InvalidDictionary(format!(
                "name {surface:?} has no tokens after normalisation"
            )));
        }
        Ok(NameForm {
            surface: surface.to_string(),
            normalized,
        })
    }

    pub fn key(&self) -> String {
        self.normalized.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub concept_id: String,
    pub preferred_name: String,
    pub name_forms: Vec<NameForm>,
    pub codes: BTreeSet<CodeId>,
}

/// Normalises a name into lowercase tokens, dropping punctuation tokens at
/// either end. Internal punctuation is kept so `s/p` stays distinct from `sp`.
pub fn normalize_name(surface: &str) -> Vec<String> {
    let tokens = tokenize(surface);
    let first = tokens.iter().position(|t| t.is_word());
    let last = tokens.iter().rposition(|t| t.is_word());
    match (first, last) {
        (Some(a), Some(b)) => tokens[a..=b].iter().map(|t| t.normalized.clone()).collect(),
        _ => Vec::new(),
    }
}

/// Lookup key of a surface string: its normalised tokens joined by one space.
pub fn name_key(surface: &str) -> String {
    normalize_name(surface).join(" ")
}

/// Names of this many characters or fewer need context confirmation even when
/// they map to a single concept.
pub const SHORT_NAME_CHARS: usize = 3;

/// Surface names → concepts → ICD-9 codes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConceptDictionary {
    concepts: BTreeMap<String, Concept>,
    names: BTreeMap<String, BTreeSet<String>>,
    max_name_tokens: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct DictionaryRow {
    concept_id: String,
    icd9_code: String,
    name: String,
    is_preferred: u8,
}

impl ConceptDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a concept with its preferred name. Fails if the id is taken or
    /// `codes` is empty.
    pub fn insert_concept(
        &mut self,
        concept_id: &str,
        preferred_name: &str,
        codes: impl IntoIterator<Item = CodeId>,
    ) -> Result<()> {
        if self.concepts.contains_key(concept_id) {
            return Err(Error::InvalidDictionary(format!(
                "duplicate concept {concept_id:?}"
            )));
        }
        let codes: BTreeSet<CodeId> = codes.into_iter().collect();
        if codes.is_empty() {
            return Err(Error::InvalidDictionary(format!(
                "concept {concept_id:?} has no codes"
            )));
        }
        let form = NameForm::new(preferred_name)?;
        self.concepts.insert(
            concept_id.to_string(),
            Concept {
                concept_id: concept_id.to_string(),
                preferred_name: preferred_name.to_string(),
                name_forms: Vec::new(),
                codes,
            },
        );
        self.attach(concept_id, form);
        Ok(())
    }

    /// Registers `surface` as a name of `concept_id`. Returns `false` when the
    /// normalised form was already present for that concept.
    pub fn add_synonym(&mut self, concept_id: &str, surface: &str) -> Result<bool> {
        if !self.concepts.contains_key(concept_id) {
            return Err(Error::UnknownConcept(concept_id.to_string()));
        }
        let form = NameForm::new(surface)?;
        Ok(self.attach(concept_id, form))
    }

    fn attach(&mut self, concept_id: &str, form: NameForm) -> bool {
        let key = form.key();
        let owners = self.names.entry(key.clone()).or_default();
        if !owners.insert(concept_id.to_string()) {
            return false;
        }
        self.max_name_tokens = self.max_name_tokens.max(form.normalized.len());
        let concept = self.concepts.get_mut(concept_id).expect("checked by caller");
        if !concept.name_forms.iter().any(|f| f.key() == key) {
            concept.name_forms.push(form);
        }
        true
    }

    pub fn add_code(&mut self, concept_id: &str, code: CodeId) -> Result<()> {
        self.concepts
            .get_mut(concept_id)
            .ok_or_else(|| Error::UnknownConcept(concept_id.to_string()))?
            .codes
            .insert(code);
        Ok(())
    }

    /// Concepts owning the normalised form of `surface`.
    pub fn lookup(&self, surface: &str) -> Option<&BTreeSet<String>> {
        self.lookup_key(&name_key(surface))
    }

    pub fn lookup_key(&self, key: &str) -> Option<&BTreeSet<String>> {
        self.names.get(key)
    }

    /// A name needs disambiguation if several concepts share it or it is a short form.
    pub fn is_ambiguous_key(&self, key: &str) -> bool {
        match self.names.get(key) {
            Some(owners) => owners.len() > 1 || key.chars().count() <= SHORT_NAME_CHARS,
            None => false,
        }
    }

    /// Names owned by more than one concept.
    pub fn ambiguous_names(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.names
            .iter()
            .filter(|(_, owners)| owners.len() > 1)
            .map(|(k, v)| (k.as_str(), v))
    }

    pub fn concept(&self, concept_id: &str) -> Option<&Concept> {
        self.concepts.get(concept_id)
    }

    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    pub fn names(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.names.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    /// Token count of the longest stored name.
    pub fn max_name_tokens(&self) -> usize {
        self.max_name_tokens
    }

    /// Cross-checks the name index against the concepts' name forms.
    pub fn check_consistency(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidDictionary(msg));
        let mut expected: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (id, concept) in &self.concepts {
            if id != &concept.concept_id {
                return fail(format!("concept stored under {id:?} has id {:?}", concept.concept_id));
            }
            if concept.codes.is_empty() || concept.name_forms.is_empty() {
                return fail(format!("concept {id:?} lacks codes or names"));
            }
            for form in &concept.name_forms {
                if form.normalized != normalize_name(&form.surface) {
                    return fail(format!("stale normalisation for {:?}", form.surface));
                }
                expected.entry(form.key()).or_default().insert(id.clone());
            }
        }
        if expected != self.names {
            return fail("name index disagrees with concept name forms".into());
        }
        let longest = self.names.keys().map(|k| k.split(' ').count()).max().unwrap_or(0);
        if longest != self.max_name_tokens {
            return fail("stale maximum name length".into());
        }
        Ok(())
    }

    /// Hex SHA-256 over the canonical CSV rendering; models record it to
    /// detect dictionary drift.
    pub fn version_hash(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        hex::encode(Sha256::digest(&buf))
    }

    pub fn from_reader<R: std::io::Read>(reader: R, origin: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::csv(origin, e))?.clone();
        for column in ["concept_id", "icd9_code", "name", "is_preferred"] {
            if !headers.iter().any(|h| h == column) {
                return Err(Error::MissingColumn {
                    path: origin.to_path_buf(),
                    column: column.into(),
                });
            }
        }

        struct Pending {
            preferred: Option<String>,
            names: Vec<String>,
            codes: BTreeSet<CodeId>,
        }
        let mut order: Vec<String> = Vec::new();
        let mut pending: BTreeMap<String, Pending> = BTreeMap::new();
        for (i, row) in rdr.deserialize::<DictionaryRow>().enumerate() {
            let line = i as u64 + 2;
            let row = row.map_err(|e| Error::MalformedRow {
                path: origin.to_path_buf(),
                row: line,
                message: e.to_string(),
            })?;
            let malformed = |message: String| Error::MalformedRow {
                path: origin.to_path_buf(),
                row: line,
                message,
            };
            if row.concept_id.trim().is_empty() {
                return Err(malformed("empty concept_id".into()));
            }
            let code = CodeId::parse(&row.icd9_code).map_err(|e| malformed(e.to_string()))?;
            let entry = pending.entry(row.concept_id.clone()).or_insert_with(|| {
                order.push(row.concept_id.clone());
                Pending {
                    preferred: None,
                    names: Vec::new(),
                    codes: BTreeSet::new(),
                }
            });
            if row.is_preferred > 1 {
                return Err(malformed(format!("is_preferred must be 0 or 1, got {}", row.is_preferred)));
            }
            if row.is_preferred == 1 && entry.preferred.is_none() {
                entry.preferred = Some(row.name.clone());
            }
            if !entry.names.contains(&row.name) {
                entry.names.push(row.name);
            }
            entry.codes.insert(code);
        }

        let mut dict = ConceptDictionary::new();
        for id in order {
            let p = pending.remove(&id).expect("registered above");
            let preferred = p.preferred.clone().unwrap_or_else(|| p.names[0].clone());
            dict.insert_concept(&id, &preferred, p.codes)?;
            for name in &p.names {
                dict.add_synonym(&id, name)?;
            }
        }
        Ok(dict)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, path)
    }

    /// One row per (concept, name, code) triple, concepts in id order.
    pub fn write_to<W: std::io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        for concept in self.concepts.values() {
            for form in &concept.name_forms {
                let is_preferred = u8::from(form.surface == concept.preferred_name);
                for code in &concept.codes {
                    wtr.serialize(DictionaryRow {
                        concept_id: concept.concept_id.clone(),
                        icd9_code: code.canonical().to_string(),
                        name: form.surface.clone(),
                        is_preferred,
                    })?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file)).map_err(|e| Error::csv(path, e))
    }
}
