use serde::Serialize;

use super::code::CodeId;

/// A top-level ICD-9-CM chapter. Bounds are inclusive category roots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Chapter {
    pub ordinal: usize,
    pub label: &'static str,
    pub low: &'static str,
    pub high: &'static str,
}

impl Chapter {
    /// Range label as used in report tables, e.g. `390-459`.
    pub fn range(&self) -> String {
        format!("{}-{}", self.low, self.high)
    }

    fn contains_root(&self, root: &str) -> bool {
        // Roots within one family share a fixed width, so string order is numeric order.
        root.len() == self.low.len() && self.low <= root && root <= self.high
    }
}

macro_rules! chapters {
    ($(($low:literal, $high:literal, $label:literal)),* $(,)?) => {{
        let mut ordinal = 0usize;
        [$({
            let c = Chapter { ordinal, label: $label, low: $low, high: $high };
            ordinal += 1;
            let _ = ordinal;
            c
        }),*]
    }};
}

pub const CHAPTER_COUNT: usize = 19;

/// The standard ICD-9-CM chapter list: 17 numeric chapters followed by the
/// V (supplementary) and E (external causes) groups.
pub static CHAPTERS: [Chapter; CHAPTER_COUNT] = chapters![
    ("001", "139", "Infectious and Parasitic Diseases"),
    ("140", "239", "Neoplasms"),
    ("240", "279", "Endocrine, Nutritional and Metabolic Diseases, and Immunity Disorders"),
    ("280", "289", "Diseases of the Blood and Blood-Forming Organs"),
    ("290", "319", "Mental Disorders"),
    ("320", "389", "Diseases of the Nervous System and Sense Organs"),
    ("390", "459", "Diseases of the Circulatory System"),
    ("460", "519", "Diseases of the Respiratory System"),
    ("520", "579", "Diseases of the Digestive System"),
    ("580", "629", "Diseases of the Genitourinary System"),
    ("630", "679", "Complications of Pregnancy, Childbirth, and the Puerperium"),
    ("680", "709", "Diseases of the Skin and Subcutaneous Tissue"),
    ("710", "739", "Diseases of the Musculoskeletal System and Connective Tissue"),
    ("740", "759", "Congenital Anomalies"),
    ("760", "779", "Certain Conditions Originating in the Perinatal Period"),
    ("780", "799", "Symptoms, Signs, and Ill-Defined Conditions"),
    ("800", "999", "Injury and Poisoning"),
    ("V01", "V99", "Supplementary Classification of Factors Influencing Health Status"),
    ("E000", "E999", "Supplementary Classification of External Causes of Injury and Poisoning"),
];

/// The chapter containing `code`. Total over valid codes.
pub fn chapter_of(code: &CodeId) -> &'static Chapter {
    let root = code.root();
    CHAPTERS
        .iter()
        .find(|c| c.contains_root(root))
        .unwrap_or_else(|| {
            // "000" and "V00" are syntactically valid but unassigned roots; fold
            // them into the first chapter of their family.
            if code.is_supplementary() {
                &CHAPTERS[17]
            } else {
                &CHAPTERS[0]
            }
        })
}
