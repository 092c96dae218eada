use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::fhir::{Bundle, CodeableConcept, Resource};
use crate::terminology::{normalize, tokens};

use super::{AnnotatedItem, ItemSide, Tag};

/// Element paths (indices stripped) whose value is compared as one unit.
const MONOLITHIC: &[&str] = &[
    "Patient.name",
    "Patient.address",
    "Condition.code",
    "Condition.clinicalStatus",
    "Condition.verificationStatus",
    "Condition.severity",
    "Condition.bodySite",
    "Condition.category",
    "MedicationStatement.medicationCodeableConcept",
    "MedicationStatement.dosage.timing",
    "MedicationStatement.dosage.doseAndRate.type",
    "MedicationStatement.dosage.doseAndRate.doseQuantity",
];

/// Not compared: ids are run-assigned and the subject is implied by alignment.
const SKIPPED: &[&str] = &["resourceType", "id", "subject"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    /// 1-based position of the owning resource in its Bundle.
    pub ordinal: usize,
    pub resource_type: String,
    pub path: String,
    pub value: Value,
}

fn walk(schema_path: &str, path: &str, value: &Value, out: &mut Vec<(String, Value)>) {
    if MONOLITHIC.contains(&schema_path) {
        match value {
            Value::Array(items) => {
                for (i, v) in items.iter().enumerate() {
                    out.push((format!("{path}[{i}]"), v.clone()));
                }
            }
            v => out.push((path.to_owned(), v.clone())),
        }
        return;
    }
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                walk(&format!("{schema_path}.{k}"), &format!("{path}.{k}"), v, out);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                walk(schema_path, &format!("{path}[{i}]"), v, out);
            }
        }
        v => out.push((path.to_owned(), v.clone())),
    }
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
enum Segment<'a> {
    Name(&'a str),
    Index(usize),
}

/// Orders `a.b[10]` after `a.b[2]`.
fn path_key(path: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    for part in path.split('.') {
        let (name, rest) = part.split_once('[').unwrap_or((part, ""));
        out.push(Segment::Name(name));
        for idx in rest.split('[') {
            if let Ok(n) = idx.trim_end_matches(']').parse() {
                out.push(Segment::Index(n));
            }
        }
    }
    out
}

pub fn compare_paths(a: &str, b: &str) -> Ordering {
    path_key(a).cmp(&path_key(b))
}

/// Items of one resource, ordered by path.
pub fn resource_items(resource: &Resource) -> Vec<(String, Value)> {
    let rtype = resource.resource_type();
    let value = serde_json::to_value(resource).expect("resource serializes");
    let mut out = Vec::new();
    if let Value::Object(map) = &value {
        for (k, v) in map {
            if !SKIPPED.contains(&k.as_str()) {
                walk(&format!("{rtype}.{k}"), &format!("{rtype}.{k}"), v, &mut out);
            }
        }
    }
    out.sort_by(|a, b| compare_paths(&a.0, &b.0));
    out
}

/// Every item of the Bundle, ordered by (resource ordinal, path).
pub fn itemize(bundle: &Bundle) -> Vec<Item> {
    bundle
        .resources()
        .enumerate()
        .flat_map(|(i, r)| {
            resource_items(r).into_iter().map(move |(path, value)| Item {
                ordinal: i + 1,
                resource_type: r.resource_type().to_owned(),
                path,
                value,
            })
        })
        .collect()
}

fn key_concept(r: &Resource) -> Option<&CodeableConcept> {
    match r {
        Resource::Patient(_) => None,
        Resource::Condition(c) => c.code.as_ref(),
        Resource::MedicationStatement(m) => m.medication_codeable_concept.as_ref(),
    }
}

/// Alignment score: shared codes dominate, then shared label tokens.
fn key_score(a: &Resource, b: &Resource) -> usize {
    if let (Resource::Patient(_), Resource::Patient(_)) = (a, b) {
        return 1;
    }
    let (Some(ka), Some(kb)) = (key_concept(a), key_concept(b)) else { return 0 };
    let codes = |c: &CodeableConcept| -> BTreeSet<(String, String)> {
        c.coding.iter().filter_map(|x| Some((x.system.clone().unwrap_or_default(), x.code.clone()?))).collect()
    };
    let words = |c: &CodeableConcept| -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for label in c.labels() {
            out.extend(tokens(&normalize(label)).into_iter().map(str::to_owned));
        }
        out
    };
    let shared_codes = codes(ka).intersection(&codes(kb)).count();
    let shared_words = words(ka).intersection(&words(kb)).count();
    shared_codes * 100 + shared_words
}

fn identical_items(a: &Resource, b: &Resource) -> usize {
    let ib = resource_items(b);
    resource_items(a).iter().filter(|x| ib.contains(x)).count()
}

struct Pairing {
    pairs: Vec<(usize, usize, bool)>,
}

/// Greedy alignment of same-type resources, given as bundle positions.
fn align(pd: &[(usize, &Resource)], hb: &[(usize, &Resource)]) -> Pairing {
    let scores: Vec<Vec<usize>> = pd.iter().map(|(_, p)| hb.iter().map(|(_, h)| key_score(p, h)).collect()).collect();
    let mut pd_used = vec![false; pd.len()];
    let mut hb_used = vec![false; hb.len()];
    let mut pairs = Vec::new();
    loop {
        let mut best: Option<(usize, usize, usize, usize)> = None;
        for (i, row) in scores.iter().enumerate() {
            for (j, &s) in row.iter().enumerate() {
                if pd_used[i] || hb_used[j] {
                    continue;
                }
                // Without a shared key, fall back to shared content.
                let same = identical_items(pd[i].1, hb[j].1);
                if s == 0 && same == 0 {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((_, _, bs, bsame)) => (s, same) > (bs, bsame),
                };
                if better {
                    best = Some((i, j, s, same));
                }
            }
        }
        let Some((i, j, s, _)) = best else { break };
        // A tie anywhere in the original scores counts, even if the rival was paired first.
        let rivals = (0..hb.len()).filter(|&k| k != j && scores[i][k] == s).count()
            + (0..pd.len()).filter(|&k| k != i && scores[k][j] == s).count();
        pd_used[i] = true;
        hb_used[j] = true;
        pairs.push((pd[i].0, hb[j].0, s == 0 || rivals > 0));
    }
    Pairing { pairs }
}

fn side(ordinal: usize, path: &str, value: &Value) -> ItemSide {
    ItemSide { ordinal, path: path.to_owned(), value: value.clone() }
}

fn object_key(r: &Resource, ordinal: usize, prefix: &str) -> String {
    match r.local_reference() {
        Some(key) => format!("{prefix}:{key}"),
        None => format!("{prefix}:#{ordinal}"),
    }
}

fn of_type<'a>(rs: &[&'a Resource], rtype: &str) -> Vec<(usize, &'a Resource)> {
    rs.iter().enumerate().filter(|(_, r)| r.resource_type() == rtype).map(|(i, r)| (i, *r)).collect()
}

/// Provisional annotations for a prediction/baseline pair. Tags are limited
/// to what can be decided mechanically: `==`, `+`, `-` and `+-`.
pub fn prediff(pd: &Bundle, hb: &Bundle) -> Vec<AnnotatedItem> {
    let pd_res: Vec<&Resource> = pd.resources().collect();
    let hb_res: Vec<&Resource> = hb.resources().collect();
    let mut pairs: Vec<(Option<usize>, Option<usize>, bool)> = Vec::new();

    for rtype in ["Patient", "Condition", "MedicationStatement"] {
        let (p, h) = (of_type(&pd_res, rtype), of_type(&hb_res, rtype));
        let mut aligned = align(&p, &h);
        if rtype == "Patient" && (p.len() > 1 || h.len() > 1) {
            for pair in &mut aligned.pairs {
                pair.2 = true;
            }
        }
        let pd_paired: Vec<usize> = aligned.pairs.iter().map(|x| x.0).collect();
        let hb_paired: Vec<usize> = aligned.pairs.iter().map(|x| x.1).collect();
        pairs.extend(aligned.pairs.into_iter().map(|(a, b, amb)| (Some(a), Some(b), amb)));
        pairs.extend(p.iter().filter(|(i, _)| !pd_paired.contains(i)).map(|(i, _)| (Some(*i), None, false)));
        pairs.extend(h.iter().filter(|(i, _)| !hb_paired.contains(i)).map(|(i, _)| (None, Some(*i), false)));
    }
    // PD order first, then baseline-only objects in HB order.
    pairs.sort_by_key(|(p, h, _)| (p.is_none(), p.unwrap_or(0), h.unwrap_or(0)));

    let mut out = Vec::new();
    for (p, h, ambiguous) in pairs {
        let pr = p.map(|i| pd_res[i]);
        let hr = h.map(|i| hb_res[i]);
        let rtype = pr.or(hr).map(Resource::resource_type).unwrap_or_default();
        let object = match (hr, pr) {
            (Some(r), _) => object_key(r, h.unwrap() + 1, "hb"),
            (None, Some(r)) => object_key(r, p.unwrap() + 1, "pd"),
            (None, None) => unreachable!(),
        };
        let pi = pr.map(resource_items).unwrap_or_default();
        let hi = hr.map(resource_items).unwrap_or_default();
        let mut paths: Vec<&str> = pi.iter().chain(&hi).map(|(path, _)| path.as_str()).collect();
        paths.sort_by(|a, b| compare_paths(a, b));
        paths.dedup();
        for path in paths {
            let pv = pi.iter().find(|(x, _)| x == path).map(|(_, v)| v);
            let hv = hi.iter().find(|(x, _)| x == path).map(|(_, v)| v);
            let tag = match (pv, hv) {
                (Some(a), Some(b)) if a == b => Tag::Identical,
                (Some(_), Some(_)) => Tag::Differ,
                (Some(_), None) => Tag::PdOnly,
                (None, Some(_)) => Tag::HbOnly,
                (None, None) => unreachable!(),
            };
            out.push(AnnotatedItem {
                resource_type: rtype.to_owned(),
                object: object.clone(),
                pd: pv.map(|v| side(p.unwrap() + 1, path, v)),
                hb: hv.map(|v| side(h.unwrap() + 1, path, v)),
                tag,
                preference: None,
                cruciality: None,
                note: String::new(),
                ambiguous,
            });
        }
    }
    out
}
