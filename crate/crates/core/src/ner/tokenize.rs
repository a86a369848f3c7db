use serde::{Deserialize, Serialize};

/// A token with byte offsets into the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub normalized: String,
    pub start: usize,
    pub end: usize,
}

impl Token {
    /// True for alphanumeric runs, false for punctuation tokens.
    pub fn is_word(&self) -> bool {
        self.surface.chars().next().is_some_and(char::is_alphanumeric)
    }
}

/// Splits text into maximal alphanumeric runs plus one token per other
/// non-whitespace character. Whitespace separates tokens and is dropped.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut word_start: Option<usize> = None;
    let push = |tokens: &mut Vec<Token>, start: usize, end: usize| {
        let surface = &text[start..end];
        tokens.push(Token {
            surface: surface.to_string(),
            normalized: surface.to_lowercase(),
            start,
            end,
        });
    };
    for (i, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            word_start.get_or_insert(i);
            continue;
        }
        if let Some(start) = word_start.take() {
            push(&mut tokens, start, i);
        }
        if !ch.is_whitespace() {
            push(&mut tokens, i, i + ch.len_utf8());
        }
    }
    if let Some(start) = word_start {
        push(&mut tokens, start, text.len());
    }
    tokens
}
