mod common;

use std::collections::{BTreeMap, BTreeSet};

use codeaudit_core::annotation::{
    create_session, failing_codes, Dataset, Mark, SessionRequest, TaskContext, ValidationSession,
};
use codeaudit_core::audit::{
    coverage_of_ranges, partition, AdmissionCodes, Bucket, PartitionRecord, SpanEvidence,
};
use codeaudit_core::corpus::{generate_synthetic, SynthConfig};
use codeaudit_core::ner::{holdout_split, tokenize, EntitySpan, SpanStatus};
use codeaudit_core::sectioner::{find_section, HeadingRules};
use codeaudit_core::stats::{cohens_kappa, pearson, summarize, wasserstein_bins};
use codeaudit_core::taxonomy::{top_k_codes, CodeId, ConceptDictionary};
use common::transport_cost;
use proptest::prelude::*;

fn code_strategy() -> impl Strategy<Value = String> {
    prop_oneof![
        "[0-9]{3}(\\.[0-9]{1,2})?",
        "V[0-9]{2}(\\.[0-9]{1,2})?",
        "E[0-9]{3}(\\.[0-9])?",
    ]
}

fn distribution(bins: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, bins).prop_map(|raw| {
        let total: f64 = raw.iter().sum();
        if total == 0.0 {
            let mut v = vec![0.0; raw.len()];
            v[0] = 1.0;
            v
        } else {
            raw.iter().map(|x| x / total).collect()
        }
    })
}

fn triple() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..=19).prop_flat_map(|n| (distribution(n), distribution(n), distribution(n)))
}

const UNIVERSE: [&str; 8] = ["4019", "4280", "5849", "25000", "V4581", "E8788", "486", "2724"];

fn universe() -> Vec<CodeId> {
    UNIVERSE.iter().map(|c| CodeId::parse(c).unwrap()).collect()
}

fn span_for(code: &CodeId) -> EntitySpan {
    EntitySpan {
        start: 0,
        end: 3,
        surface: "abc".into(),
        token_range: 0..1,
        concept_id: "C".into(),
        codes: vec![code.clone()],
        confidence: 1.0,
        status: SpanStatus::Unambiguous,
    }
}

/// Admissions as (predicted mask, assigned mask) over the code universe, plus a scope mask.
fn admissions_strategy() -> impl Strategy<Value = (Vec<(u8, u8)>, u8)> {
    (prop::collection::vec((any::<u8>(), any::<u8>()), 0..8), any::<u8>())
}

fn build_admissions(masks: &[(u8, u8)], scope_mask: u8) -> (Vec<AdmissionCodes>, BTreeSet<CodeId>) {
    let u = universe();
    let pick = |mask: u8| -> BTreeSet<CodeId> {
        u.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, c)| c.clone()).collect()
    };
    let admissions = masks
        .iter()
        .enumerate()
        .map(|(i, &(p, a))| AdmissionCodes {
            admission_id: format!("{}", 100 + i),
            assigned: pick(a),
            predicted: pick(p).into_iter().map(|c| { let s = span_for(&c); (c, vec![s]) }).collect(),
            dd: None,
        })
        .collect();
    (admissions, pick(scope_mask))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn code_parse_is_idempotent(raw in code_strategy()) {
        let code = CodeId::parse(&raw).unwrap();
        let again = CodeId::parse(&code.display()).unwrap();
        prop_assert_eq!(&again, &code);
        prop_assert_eq!(CodeId::parse(code.canonical()).unwrap(), code.clone());
        prop_assert!(!code.canonical().contains('.'));
        prop_assert_eq!(code.display().replace('.', ""), code.canonical());
    }

    #[test]
    fn wasserstein_is_a_metric((p, q, r) in triple()) {
        let pq = wasserstein_bins(&p, &q).unwrap();
        let qp = wasserstein_bins(&q, &p).unwrap();
        prop_assert!((pq - qp).abs() < 1e-12);
        prop_assert!(wasserstein_bins(&p, &p).unwrap().abs() < 1e-12);
        prop_assert!(pq >= 0.0);
        prop_assert!(pq <= (p.len() - 1) as f64 + 1e-9);
        let pr = wasserstein_bins(&p, &r).unwrap();
        let rq = wasserstein_bins(&r, &q).unwrap();
        prop_assert!(pq <= pr + rq + 1e-9);
    }

    #[test]
    fn wasserstein_matches_transport((p, q, _) in (1usize..=7).prop_flat_map(|n| (distribution(n), distribution(n), Just(())))) {
        let fast = wasserstein_bins(&p, &q).unwrap();
        prop_assert!((fast - transport_cost(&p, &q)).abs() <= 1e-9);
    }

    #[test]
    fn kappa_is_symmetric(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
        let a: Vec<bool> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        match (cohens_kappa(&a, &b), cohens_kappa(&b, &a)) {
            (Ok(x), Ok(y)) => {
                prop_assert!((x - y).abs() < 1e-12);
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&x));
            }
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "asymmetric outcome {:?}", other),
        }
        if let Ok(k) = cohens_kappa(&a, &a) {
            prop_assert!((k - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pearson_is_bounded_and_affine_invariant(
        xy in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..40),
        scale in 0.1f64..10.0,
        shift in -50.0f64..50.0,
    ) {
        let x: Vec<f64> = xy.iter().map(|p| p.0).collect();
        let y: Vec<f64> = xy.iter().map(|p| p.1).collect();
        if let Ok(r) = pearson(&x, &y) {
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&r));
            let x2: Vec<f64> = x.iter().map(|v| v * scale + shift).collect();
            let r2 = pearson(&x2, &y).unwrap();
            prop_assert!((r - r2).abs() < 1e-6);
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            prop_assert!((pearson(&neg, &y).unwrap() + r).abs() < 1e-9);
        }
    }

    #[test]
    fn summary_is_bounded(values in prop::collection::vec(-1e6f64..1e6, 1..80)) {
        let s = summarize(&values).unwrap();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(s.mean >= lo - 1e-6 && s.mean <= hi + 1e-6);
        prop_assert!(s.median >= lo && s.median <= hi);
        prop_assert!(s.std >= 0.0 && s.iqr >= 0.0);
        prop_assert!(s.iqr <= hi - lo + 1e-9);
        prop_assert_eq!(s.count, values.len());
    }

    #[test]
    fn partition_is_disjoint_and_covering((masks, scope_mask) in admissions_strategy()) {
        let (admissions, scope) = build_admissions(&masks, scope_mask);
        let records = partition(&admissions, &scope);
        let keys: BTreeSet<(String, CodeId)> =
            records.iter().map(|r| (r.admission_id.clone(), r.code.clone())).collect();
        prop_assert_eq!(keys.len(), records.len());
        let mut expected = BTreeSet::new();
        for a in &admissions {
            for c in a.assigned.iter().chain(a.predicted.keys()) {
                if scope.contains(c) {
                    expected.insert((a.admission_id.clone(), c.clone()));
                }
            }
        }
        prop_assert_eq!(&keys, &expected);
        for r in &records {
            prop_assert_eq!(r.evidence.is_some(), r.bucket != Bucket::AssignedNotPredicted);
        }
    }

    #[test]
    fn coverage_is_a_fraction(body in "[a-z ,.\n]{0,60}", ranges in prop::collection::vec((0usize..70, 0usize..70), 0..6)) {
        let ranges: Vec<(usize, usize)> = ranges.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        let f = coverage_of_ranges(&body, &ranges);
        prop_assert!((0.0..=1.0).contains(&f));
        let full = coverage_of_ranges(&body, &[(0, body.len())]);
        if body.trim().is_empty() {
            prop_assert_eq!(full, 0.0);
        } else {
            prop_assert_eq!(full, 1.0);
        }
    }

    #[test]
    fn top_k_is_sorted_and_bounded(picks in prop::collection::vec(0usize..8, 0..60), k in 0usize..10) {
        let u = universe();
        let codes: Vec<CodeId> = picks.iter().map(|&i| u[i].clone()).collect();
        let ranked = top_k_codes(&codes, k);
        let distinct: BTreeSet<&CodeId> = codes.iter().collect();
        prop_assert_eq!(ranked.len(), k.min(distinct.len()));
        for w in ranked.windows(2) {
            prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
        }
        for (c, n) in &ranked {
            prop_assert_eq!(*n as usize, codes.iter().filter(|x| *x == c).count());
        }
        if let Some(last) = ranked.last() {
            let kept: BTreeSet<&CodeId> = ranked.iter().map(|r| &r.0).collect();
            for c in distinct.iter().filter(|c| !kept.contains(*c)) {
                prop_assert!(codes.iter().filter(|x| x == c).count() as u64 <= last.1);
            }
        }
    }

    #[test]
    fn tokenizer_offsets_are_faithful(text in "[A-Za-z0-9 ,./()\\-\n:]{0,80}") {
        let tokens = tokenize(&text);
        let mut prev_end = 0;
        for t in &tokens {
            prop_assert_eq!(&text[t.start..t.end], t.surface.as_str());
            prop_assert!(t.start >= prev_end);
            prop_assert!(text[prev_end..t.start].chars().all(char::is_whitespace));
            prop_assert_eq!(t.normalized.clone(), t.surface.to_lowercase());
            prev_end = t.end;
        }
        let rebuilt: String = tokens.iter().map(|t| t.surface.as_str()).collect();
        let stripped: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        prop_assert_eq!(rebuilt, stripped);
    }

    #[test]
    fn holdout_split_partitions_indices(n in 0usize..200, seed in any::<u64>()) {
        let (train, test) = holdout_split(n, seed);
        prop_assert_eq!(train.len() + test.len(), n);
        prop_assert_eq!(test.len(), (n as f64 * 0.2).round() as usize);
        let all: BTreeSet<usize> = train.iter().chain(&test).copied().collect();
        prop_assert_eq!(all, (0..n).collect::<BTreeSet<_>>());
        prop_assert_eq!(holdout_split(n, seed), (train, test));
    }

    #[test]
    fn planted_section_is_recovered(
        before in prop::collection::vec("[A-Z][a-z]{2,8} [a-z]{2,8}\\.", 0..4),
        items in prop::collection::vec("[A-Za-z][a-z]{2,10}( [a-z]{2,10}){0,3}", 1..6),
        heading in prop_oneof![Just("Discharge Diagnosis"), Just("DISCHARGE DIAGNOSES"), Just("Final Diagnosis")],
    ) {
        let body: Vec<String> = items.iter().enumerate().map(|(i, t)| format!("{}. {t}", i + 1)).collect();
        let body = body.join("\n");
        let text = format!(
            "Admission Date: 2101-01-01\n{}\n\n{heading}:\n{body}\n\nDischarge Condition:\nstable\n",
            before.join("\n")
        );
        let section = find_section(&text, &HeadingRules::default()).unwrap();
        prop_assert_eq!(&section.body, &body);
        prop_assert_eq!(&text[section.start..section.end], body.as_str());
        prop_assert_eq!(section.line_items, items);
    }

    #[test]
    fn dictionary_csv_round_trips(entries in prop::collection::vec(("[a-z]{2,8}( [a-z]{2,8}){0,2}", 0usize..6, 0usize..8), 1..20)) {
        let u = universe();
        let mut dict = ConceptDictionary::new();
        for (name, concept, code) in &entries {
            let id = format!("C{concept}");
            if dict.concept(&id).is_none() {
                dict.insert_concept(&id, name, [u[*code].clone()]).unwrap();
            } else {
                dict.add_synonym(&id, name).unwrap();
                dict.add_code(&id, u[*code].clone()).unwrap();
            }
        }
        let mut bytes = Vec::new();
        dict.write_to(&mut bytes).unwrap();
        let back = ConceptDictionary::from_reader(bytes.as_slice(), std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(back.version_hash(), dict.version_hash());
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        prop_assert_eq!(again, bytes);
        for (name, owners) in dict.names() {
            prop_assert_eq!(back.lookup_key(name), Some(owners));
            prop_assert_eq!(back.is_ambiguous_key(name), owners.len() > 1 || name.chars().count() <= 3);
        }
    }
}

fn session_with_marks(records: &[PartitionRecord], marks: &[Option<bool>], cap: usize) -> ValidationSession {
    let documents = BTreeMap::new();
    let code_concepts = BTreeMap::new();
    let ctx = TaskContext {
        documents: &documents,
        code_concepts: &code_concepts,
    };
    let request = SessionRequest {
        session_id: "s0001".into(),
        annotator_id: "a".into(),
        dataset: Dataset::PredictedAssigned,
        per_code_cap: cap,
        seed: 9,
    };
    let mut session = create_session(request, records, ctx);
    for (t, m) in session.tasks.clone().iter().zip(marks.iter().cycle()) {
        let mark = match m {
            Some(true) => Mark::Correct,
            Some(false) => Mark::Incorrect,
            None => Mark::Skipped,
        };
        session.submit_mark(&t.task_id, mark).unwrap();
    }
    session.finalize().unwrap();
    session
}

fn p_a_records(counts: &[usize]) -> Vec<PartitionRecord> {
    let u = universe();
    counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| {
            let code = u[c].clone();
            (0..n).map(move |i| PartitionRecord {
                admission_id: format!("{}", 1000 + i),
                code: code.clone(),
                bucket: Bucket::PredictedAssigned,
                evidence: Some(SpanEvidence { start: 0, end: 1, text: "x".into() }),
            })
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sampling_respects_the_cap(counts in prop::collection::vec(0usize..25, 1..8), cap in 1usize..12) {
        let records = p_a_records(&counts);
        let session = session_with_marks(&records, &[Some(true)], cap);
        let mut per_code: BTreeMap<&CodeId, usize> = BTreeMap::new();
        for t in &session.tasks {
            *per_code.entry(&t.code).or_default() += 1;
        }
        let u = universe();
        for (i, &n) in counts.iter().enumerate() {
            prop_assert_eq!(per_code.get(&u[i]).copied().unwrap_or(0), n.min(cap));
        }
        let ids: BTreeSet<&String> = session.tasks.iter().map(|t| &t.task_id).collect();
        prop_assert_eq!(ids.len(), session.tasks.len());
    }

    #[test]
    fn failing_set_grows_with_threshold(
        counts in prop::collection::vec(1usize..15, 1..8),
        marks in prop::collection::vec(prop::option::of(any::<bool>()), 1..10),
        t1 in 0.0f64..=1.0,
        t2 in 0.0f64..=1.0,
    ) {
        let session = session_with_marks(&p_a_records(&counts), &marks, 10);
        let sessions = [session];
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let a = failing_codes(&sessions, lo).unwrap();
        let b = failing_codes(&sessions, hi).unwrap();
        prop_assert!(a.failing.is_subset(&b.failing));
        prop_assert!(a.unvalidated.is_subset(&a.failing));
        prop_assert!(a.failing.is_disjoint(&a.passing));
        prop_assert_eq!(a.failing.len() + a.passing.len(), counts.len());
    }
}

#[test]
fn transport_hand_values() {
    assert!((transport_cost(&[1.0, 0.0], &[0.0, 1.0]) - 1.0).abs() < 1e-12);
    assert!((transport_cost(&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]) - 2.0).abs() < 1e-12);
    assert!((transport_cost(&[0.5, 0.5, 0.0], &[0.0, 0.5, 0.5]) - 1.0).abs() < 1e-12);
    assert!(transport_cost(&[0.2, 0.8], &[0.2, 0.8]).abs() < 1e-12);
}

/// Each listed code is omitted independently, so per-code omission counts
/// must sit within 3 binomial standard deviations of the planted rate.
#[test]
fn synthetic_omissions_follow_the_planted_rate() {
    let config = SynthConfig {
        n_admissions: 3000,
        undercode_rate: 0.15,
        seed: 99,
        ..SynthConfig::default()
    };
    let (bundle, truth) = generate_synthetic(&config).unwrap();
    let mut listed: BTreeMap<&CodeId, u64> = BTreeMap::new();
    let mut omitted: BTreeMap<&CodeId, u64> = BTreeMap::new();
    for t in truth.values() {
        for c in &t.listed {
            *listed.entry(c).or_default() += 1;
            if t.omitted.contains(c) {
                *omitted.entry(c).or_default() += 1;
            }
        }
        assert!(t.omitted.iter().all(|c| t.listed.contains(c)));
    }
    let mut checked = 0;
    for (code, &n) in listed.iter().filter(|(_, n)| **n >= 100) {
        let k = omitted.get(code).copied().unwrap_or(0) as f64;
        let mean = n as f64 * 0.15;
        let sd = (n as f64 * 0.15 * 0.85).sqrt();
        assert!((k - mean).abs() <= 3.0 * sd, "{}: {k} omitted of {n}", code.canonical());
        checked += 1;
    }
    assert!(checked >= 10);

    // Assignments hold exactly the full code set minus omissions.
    let assigned = bundle.assigned_by_admission();
    for (id, t) in &truth {
        let got: BTreeSet<CodeId> = assigned.get(id).cloned().unwrap_or_default().into_iter().collect();
        let want: BTreeSet<CodeId> = t.full_codes().difference(&t.omitted).cloned().collect();
        assert_eq!(got, want, "admission {id}");
    }
}
