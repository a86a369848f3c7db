use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An ICD-9-CM diagnosis code, stored in its dotless canonical form.
///
/// Ordering and equality follow the canonical string, so `"4019"` and
/// `"401.9"` parse to equal values.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CodeId {
    canonical: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Numeric,
    Supplementary,
    External,
}

fn classify(canonical: &str) -> Option<Family> {
    let bytes = canonical.as_bytes();
    let (family, digits) = match bytes.first()? {
        b'V' => (Family::Supplementary, &bytes[1..]),
        b'E' => (Family::External, &bytes[1..]),
        _ => (Family::Numeric, bytes),
    };
    let (min, max) = match family {
        Family::Numeric => (3, 5),
        Family::Supplementary => (2, 4),
        Family::External => (3, 4),
    };
    let ok = (min..=max).contains(&digits.len()) && digits.iter().all(u8::is_ascii_digit);
    ok.then_some(family)
}

fn root_len(family: Family) -> usize {
    match family {
        Family::External => 4,
        _ => 3,
    }
}

impl CodeId {
    /// Parses a dotted or dotless code. Surrounding whitespace is ignored and
    /// `v`/`e` prefixes are upper-cased.
    pub fn parse(raw: &str) -> Result<Self> {
        let trimmed = raw.trim();
        let invalid = || Error::InvalidCode(raw.to_string());
        if trimmed.is_empty() {
            return Err(invalid());
        }
        let upper = trimmed.to_ascii_uppercase();
        let canonical = match upper.find('.') {
            None => upper,
            Some(dot) => {
                let (head, tail) = (&upper[..dot], &upper[dot + 1..]);
                if tail.is_empty() || tail.contains('.') {
                    return Err(invalid());
                }
                let family = classify(&format!("{head}{tail}")).ok_or_else(invalid)?;
                if head.len() != root_len(family) {
                    return Err(invalid());
                }
                format!("{head}{tail}")
            }
        };
        classify(&canonical).ok_or_else(invalid)?;
        Ok(CodeId { canonical })
    }

    pub fn canonical(&self) -> &str {
        &self.canonical
    }

    /// Dotted display form, e.g. `401.9` or `E888.9`.
    pub fn display(&self) -> String {
        let root = self.root();
        if root.len() == self.canonical.len() {
            root.to_string()
        } else {
            format!("{}.{}", root, &self.canonical[root.len()..])
        }
    }

    /// The category root: three characters, four for E-codes.
    pub fn root(&self) -> &str {
        &self.canonical[..root_len(self.family())]
    }

    pub fn is_supplementary(&self) -> bool {
        self.family() == Family::Supplementary
    }

    pub fn is_external_cause(&self) -> bool {
        self.family() == Family::External
    }

    fn family(&self) -> Family {
        classify(&self.canonical).expect("CodeId holds a validated code")
    }
}

/// Free-function form of [`CodeId::parse`].
pub fn parse_code(raw: &str) -> Result<CodeId> {
    CodeId::parse(raw)
}

impl fmt::Display for CodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical)
    }
}

impl FromStr for CodeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CodeId::parse(s)
    }
}

impl AsRef<str> for CodeId {
    fn as_ref(&self) -> &str {
        &self.canonical
    }
}

impl Serialize for CodeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.canonical)
    }
}

impl<'de> Deserialize<'de> for CodeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        CodeId::parse(&raw).map_err(serde::de::Error::custom)
    }
}
