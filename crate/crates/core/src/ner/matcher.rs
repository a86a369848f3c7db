use std::collections::BTreeSet;
use std::ops::Range;

use super::tokenize::Token;
use crate::taxonomy::ConceptDictionary;

/// A dictionary hit before disambiguation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    /// Half-open token index range.
    pub token_range: Range<usize>,
    pub start: usize,
    pub end: usize,
    pub key: String,
    pub concepts: BTreeSet<String>,
    /// Set when the name needs context confirmation (shared or short form).
    pub ambiguous: bool,
}

impl Candidate {
    pub fn is_unambiguous(&self) -> bool {
        !self.ambiguous
    }
}

/// Greedy left-to-right longest match of token n-grams against the
/// dictionary's normalised names. Returned candidates never overlap.
pub fn detect_spans(tokens: &[Token], dict: &ConceptDictionary) -> Vec<Candidate> {
    let max_n = dict.max_name_tokens();
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if !tokens[i].is_word() {
            i += 1;
            continue;
        }
        let longest = max_n.min(tokens.len() - i);
        let hit = (1..=longest).rev().find_map(|n| {
            let key = join_key(&tokens[i..i + n]);
            dict.lookup_key(&key).map(|owners| (n, key, owners))
        });
        match hit {
            Some((n, key, owners)) => {
                out.push(Candidate {
                    token_range: i..i + n,
                    start: tokens[i].start,
                    end: tokens[i + n - 1].end,
                    ambiguous: dict.is_ambiguous_key(&key),
                    concepts: owners.clone(),
                    key,
                });
                i += n;
            }
            None => i += 1,
        }
    }
    out
}

pub(crate) fn join_key(tokens: &[Token]) -> String {
    let mut key = String::new();
    for (j, t) in tokens.iter().enumerate() {
        if j > 0 {
            key.push(' ');
        }
        key.push_str(&t.normalized);
    }
    key
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ner::tokenize;
    use crate::taxonomy::parse_code;

    fn dict() -> ConceptDictionary {
        let mut d = ConceptDictionary::new();
        d.insert_concept("SDH", "Subdural hematoma", [parse_code("4321").unwrap()]).unwrap();
        d.insert_concept("HEM", "Hematoma", [parse_code("9249").unwrap()]).unwrap();
        d.insert_concept("HTN", "Hypertension", [parse_code("4019").unwrap()]).unwrap();
        d.insert_concept("DM2", "Diabetes mellitus", [parse_code("25000").unwrap()]).unwrap();
        d.insert_concept("MYD", "Myotonic dystrophy", [parse_code("35921").unwrap()]).unwrap();
        d.add_synonym("DM2", "DM").unwrap();
        d.add_synonym("MYD", "DM").unwrap();
        d
    }

    #[test]
    fn longest_match_wins() {
        let text = "Subdural hematoma";
        let c = detect_spans(&tokenize(text), &dict());
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].token_range, 0..2);
        assert_eq!(&text[c[0].start..c[0].end], text);
        assert!(c[0].concepts.contains("SDH"));
    }

    #[test]
    fn single_concept_is_unambiguous() {
        let c = detect_spans(&tokenize("Hypertension"), &dict());
        assert_eq!(c.len(), 1);
        assert!(c[0].is_unambiguous());
    }

    #[test]
    fn shared_abbreviation_is_pending() {
        let c = detect_spans(&tokenize("h/o DM."), &dict());
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].concepts.len(), 2);
        assert!(c[0].ambiguous);
    }

    #[test]
    fn no_hits() {
        assert!(detect_spans(&tokenize("nothing relevant here"), &dict()).is_empty());
        assert!(detect_spans(&[], &dict()).is_empty());
    }

    #[test]
    fn punctuation_blocks_multi_token_names() {
        let c = detect_spans(&tokenize("subdural, hematoma"), &dict());
        assert_eq!(c.len(), 1);
        assert!(c[0].concepts.contains("HEM"));
    }
}
