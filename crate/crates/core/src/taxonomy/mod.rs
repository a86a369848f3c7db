//! ICD-9-CM codes, chapters and the concept dictionary.

mod chapter;
mod code;
mod dictionary;

use std::collections::HashMap;

pub use chapter::{chapter_of, Chapter, CHAPTERS, CHAPTER_COUNT};
pub use code::{parse_code, CodeId};
pub use dictionary::{
    name_key, normalize_name, Concept, ConceptDictionary, NameForm, SHORT_NAME_CHARS,
};

/// Default size of the audited code scope.
pub const DEFAULT_TOP_K: usize = 400;

/// The `k` most frequent codes with their counts, most frequent first. Ties
/// are broken by canonical code, ascending.
pub fn top_k_codes<'a>(assigned: impl IntoIterator<Item = &'a CodeId>, k: usize) -> Vec<(CodeId, u64)> {
    let mut counts: HashMap<&CodeId, u64> = HashMap::new();
    for code in assigned {
        *counts.entry(code).or_default() += 1;
    }
    let mut ranked: Vec<(CodeId, u64)> = counts.into_iter().map(|(c, n)| (c.clone(), n)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}
