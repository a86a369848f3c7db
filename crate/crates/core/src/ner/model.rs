use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tokenize::Token;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dimension: usize,
    /// Context words taken on each side of a span.
    pub window: usize,
    pub similarity_threshold: f32,
    pub learning_rate: f32,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dimension: 300,
            window: 9,
            similarity_threshold: 0.3,
            learning_rate: 0.01,
            seed: 42,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if !(-1.0..=1.0).contains(&self.similarity_threshold) {
            return Err(Error::Config("similarity threshold must lie in [-1, 1]".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// A vector plus the number of updates it has received.
#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub vector: Vec<f32>,
    pub updates: u64,
}

/// Word and concept vectors used to disambiguate dictionary hits.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextModel {
    config: ModelConfig,
    words: BTreeMap<String, Trained>,
    concepts: BTreeMap<String, Trained>,
    dictionary_hash: Option<String>,
    version: u64,
}

/// FNV-1a over `label`, mixed with `seed`. Used to give every word its own
/// reproducible random stream independent of corpus order.
pub(crate) fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.rotate_left(17);
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl ContextModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(ContextModel {
            config,
            words: BTreeMap::new(),
            concepts: BTreeMap::new(),
            dictionary_hash: None,
            version: 0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn dimension(&self) -> usize {
        self.config.dimension
    }

    pub fn similarity_threshold(&self) -> f32 {
        self.config.similarity_threshold
    }

    pub fn set_similarity_threshold(&mut self, threshold: f32) -> Result<()> {
        let mut config = self.config.clone();
        config.similarity_threshold = threshold;
        config.validate()?;
        self.config = config;
        Ok(())
    }

    /// Bumped by every training pass that changed the model.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    pub fn dictionary_hash(&self) -> Option<&str> {
        self.dictionary_hash.as_deref()
    }

    pub(crate) fn set_dictionary_hash(&mut self, hash: String) {
        self.dictionary_hash = Some(hash);
    }

    pub fn word_vector(&self, word: &str) -> Option<&[f32]> {
        self.words.get(word).map(|t| t.vector.as_slice())
    }

    pub fn vocabulary_len(&self) -> usize {
        self.words.len()
    }

    /// `None` until the concept has received its first update.
    pub fn concept_vector(&self, concept_id: &str) -> Option<&[f32]> {
        self.concepts.get(concept_id).map(|t| t.vector.as_slice())
    }

    pub fn concept_updates(&self, concept_id: &str) -> u64 {
        self.concepts.get(concept_id).map_or(0, |t| t.updates)
    }

    pub fn set_word_vector(&mut self, word: &str, vector: Vec<f32>) -> Result<()> {
        self.check_len(&vector)?;
        self.words.insert(word.to_lowercase(), Trained { vector, updates: 0 });
        Ok(())
    }

    pub fn set_concept_vector(&mut self, concept_id: &str, vector: Vec<f32>) -> Result<()> {
        self.check_len(&vector)?;
        self.concepts.insert(concept_id.to_string(), Trained { vector, updates: 1 });
        Ok(())
    }

    fn check_len(&self, v: &[f32]) -> Result<()> {
        if v.len() != self.config.dimension {
            return Err(Error::Config(format!(
                "vector of length {} for a {}-dimensional model",
                v.len(),
                self.config.dimension
            )));
        }
        Ok(())
    }

    /// Adds `word` with a seeded uniform vector in `[-0.5/dim, 0.5/dim]`.
    pub(crate) fn ensure_word(&mut self, word: &str) {
        if self.words.contains_key(word) {
            return;
        }
        let dim = self.config.dimension;
        let bound = 0.5 / dim as f32;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, word));
        let vector = (0..dim).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.words.insert(word.to_string(), Trained { vector, updates: 0 });
    }

    pub(crate) fn words_mut(&mut self) -> &mut BTreeMap<String, Trained> {
        &mut self.words
    }

    pub(crate) fn concepts_mut(&mut self) -> &mut BTreeMap<String, Trained> {
        &mut self.concepts
    }

    /// Mean vector of up to `window` word tokens on each side of `span`,
    /// ignoring punctuation, the span itself and out-of-vocabulary words.
    /// Zero when no context word is known.
    pub fn embed_context(&self, tokens: &[Token], span: Range<usize>) -> Vec<f32> {
        let mut sum = vec![0f64; self.config.dimension];
        let mut n = 0usize;
        for idx in context_indices(tokens, span, self.config.window) {
            if let Some(v) = self.word_vector(&tokens[idx].normalized) {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += f64::from(*x);
                }
                n += 1;
            }
        }
        if n == 0 {
            return vec![0.0; self.config.dimension];
        }
        sum.into_iter().map(|s| (s / n as f64) as f32).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json();
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json { source, .. } => Error::json(path, source),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            config: self.config.clone(),
            dictionary_hash: self.dictionary_hash.clone(),
            version: self.version,
            words: encode_table(&self.words),
            concepts: encode_table(&self.concepts),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("model serialises");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::json("<model>", e))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Config(format!("unsupported model format {:?}", file.format)));
        }
        file.config.validate()?;
        let dim = file.config.dimension;
        Ok(ContextModel {
            words: decode_table(file.words, dim)?,
            concepts: decode_table(file.concepts, dim)?,
            config: file.config,
            dictionary_hash: file.dictionary_hash,
            version: file.version,
        })
    }
}

/// Word-token indices in the context window around `span`, nearest first on
/// the left, then the right.
pub(crate) fn context_indices(tokens: &[Token], span: Range<usize>, window: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..span.start)
        .rev()
        .filter(|&i| tokens[i].is_word())
        .take(window)
        .collect();
    out.extend((span.end..tokens.len()).filter(|&i| tokens[i].is_word()).take(window));
    out
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0f64, 0f64, 0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

const MODEL_FORMAT: &str = "codeaudit-context-model/1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    config: ModelConfig,
    dictionary_hash: Option<String>,
    version: u64,
    words: Vec<EncodedVector>,
    concepts: Vec<EncodedVector>,
}

/// Vectors are stored as base64 little-endian `f32` so the file round-trips bit-exactly.
#[derive(Serialize, Deserialize)]
struct EncodedVector {
    key: String,
    updates: u64,
    data: String,
}

fn encode_table(table: &BTreeMap<String, Trained>) -> Vec<EncodedVector> {
    table
        .iter()
        .map(|(key, t)| {
            let bytes: Vec<u8> = t.vector.iter().flat_map(|x| x.to_le_bytes()).collect();
            EncodedVector {
                key: key.clone(),
                updates: t.updates,
                data: B64.encode(bytes),
            }
        })
        .collect()
}

fn decode_table(rows: Vec<EncodedVector>, dim: usize) -> Result<BTreeMap<String, Trained>> {
    let mut table = BTreeMap::new();
    for row in rows {
        let bytes = B64
            .decode(row.data.as_bytes())
            .map_err(|e| Error::Config(format!("vector {:?}: {e}", row.key)))?;
        if bytes.len() != dim * 4 {
            return Err(Error::Config(format!(
                "vector {:?} has {} bytes, expected {}",
                row.key,
                bytes.len(),
                dim * 4
            )));
        }
        let vector = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        table.insert(row.key, Trained { vector, updates: row.updates });
    }
    Ok(table)
}
