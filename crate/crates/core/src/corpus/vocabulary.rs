use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::taxonomy::{CodeId, ConceptDictionary};

/// A code with the surface forms the generator may write for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthCode {
    pub code: CodeId,
    pub preferred: String,
    pub synonyms: Vec<String>,
}

const DEFAULT: &[(&str, &str, &[&str])] = &[
    ("4019", "Hypertension", &["HTN", "high blood pressure", "essential hypertension"]),
    ("41401", "Coronary artery disease", &["CAD", "coronary atherosclerosis"]),
    ("4280", "Congestive heart failure", &["CHF", "heart failure"]),
    ("42731", "Atrial fibrillation", &["AFib", "a-fib"]),
    ("5849", "Acute kidney failure", &["ARF", "acute renal failure", "AKI"]),
    ("25000", "Type 2 diabetes mellitus", &["DM", "DM2", "diabetes"]),
    ("2724", "Hyperlipidemia", &["HLD", "Dyslipidemia", "high cholesterol"]),
    ("51881", "Acute respiratory failure", &["ARF", "respiratory failure"]),
    ("5990", "Urinary tract infection", &["UTI"]),
    ("53081", "Gastroesophageal reflux disease", &["GERD", "reflux"]),
    ("2859", "Anemia", &["anaemia"]),
    ("0389", "Sepsis", &["septicemia"]),
    ("2449", "Hypothyroidism", &["hypothyroid"]),
    ("486", "Pneumonia", &["PNA"]),
    ("496", "Chronic obstructive pulmonary disease", &["COPD"]),
    ("5859", "Chronic kidney disease", &["CKD", "chronic renal insufficiency"]),
    ("41071", "Non-ST elevation myocardial infarction", &["NSTEMI"]),
    ("2762", "Metabolic acidosis", &["acidosis"]),
    ("2761", "Hyponatremia", &["low sodium"]),
    ("311", "Depression", &["depressive disorder"]),
    ("3051", "Tobacco use disorder", &["tobacco use", "smoker"]),
    ("V5861", "Long-term use of anticoagulants", &["chronic anticoagulation"]),
    ("V4581", "Aortocoronary bypass status", &["s/p CABG", "history of CABG"]),
    ("4241", "Aortic stenosis", &["AS"]),
    ("40390", "Hypertensive chronic kidney disease", &["hypertensive CKD"]),
    ("2851", "Acute posthemorrhagic anemia", &["blood loss anemia"]),
    ("5070", "Aspiration pneumonia", &["aspiration pneumonitis"]),
    ("4589", "Hypotension", &["low blood pressure"]),
    ("78552", "Septic shock", &["shock due to sepsis"]),
    ("2875", "Thrombocytopenia", &["low platelets"]),
    ("4271", "Ventricular tachycardia", &["VT", "V-tach"]),
    ("78039", "Seizures", &["seizure disorder", "convulsions"]),
    ("4321", "Subdural hematoma", &["SDH"]),
    ("E8788", "Complication of surgical procedure", &["surgical complication"]),
    ("V1582", "History of tobacco use", &["former smoker"]),
    ("2809", "Iron deficiency anemia", &["IDA"]),
    ("71590", "Osteoarthritis", &["OA", "degenerative joint disease"]),
    ("5715", "Cirrhosis of liver", &["cirrhosis"]),
    ("30500", "Alcohol abuse", &["EtOH abuse"]),
    ("32723", "Obstructive sleep apnea", &["OSA"]),
    ("2930", "Delirium", &["acute confusional state"]),
    ("2639", "Protein calorie malnutrition", &["malnutrition"]),
    ("60000", "Benign prostatic hyperplasia", &["BPH"]),
    ("2768", "Hypokalemia", &["low potassium"]),
];

/// Built-in vocabulary of common discharge diagnoses, ordered by assumed
/// frequency. Preferred names are unique and longer than three characters.
pub fn default_vocabulary() -> Vec<SynthCode> {
    DEFAULT
        .iter()
        .map(|(code, preferred, synonyms)| SynthCode {
            code: CodeId::parse(code).expect("built-in codes are valid"),
            preferred: preferred.to_string(),
            synonyms: synonyms.iter().map(|s| s.to_string()).collect(),
        })
        .collect()
}

pub fn concept_id_for(code: &CodeId) -> String {
    format!("SYN-{}", code.canonical())
}

/// Dictionary with every name form of every vocabulary entry.
pub fn vocabulary_dictionary(vocabulary: &[SynthCode]) -> Result<ConceptDictionary> {
    let mut dict = ConceptDictionary::new();
    for entry in vocabulary {
        let id = concept_id_for(&entry.code);
        dict.insert_concept(&id, &entry.preferred, [entry.code.clone()])?;
        for s in &entry.synonyms {
            dict.add_synonym(&id, s)?;
        }
    }
    Ok(dict)
}
