//! Item-level comparison of predicted (PD) and baseline (HB) Bundles:
//! itemization, provisional tagging, annotation files and the
//! judgment x cruciality matrix.

mod items;
mod matrix;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use items::{compare_paths, itemize, prediff, resource_items, Item};
pub use matrix::{aggregate, matrix_csv, render_matrix, EvalMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    #[serde(rename = "=")]
    Related,
    #[serde(rename = "==")]
    Identical,
    #[serde(rename = "+")]
    PdOnly,
    #[serde(rename = "-")]
    HbOnly,
    #[serde(rename = "+-")]
    Differ,
    #[serde(rename = "X")]
    Hallucination,
}

impl Tag {
    pub const ALL: [Tag; 6] = [Tag::Related, Tag::Identical, Tag::PdOnly, Tag::HbOnly, Tag::Differ, Tag::Hallucination];

    pub fn sigil(self) -> &'static str {
        match self {
            Tag::Related => "=",
            Tag::Identical => "==",
            Tag::PdOnly => "+",
            Tag::HbOnly => "-",
            Tag::Differ => "+-",
            Tag::Hallucination => "X",
        }
    }

    fn index(self) -> usize {
        Tag::ALL.iter().position(|t| *t == self).expect("listed")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preference {
    #[serde(rename = "/")]
    Prediction,
    #[serde(rename = "|")]
    Baseline,
}

impl Preference {
    pub fn sigil(self) -> char {
        match self {
            Preference::Prediction => '/',
            Preference::Baseline => '|',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cruciality {
    #[serde(rename = "!")]
    Crucial,
    #[serde(rename = "?")]
    Minor,
}

impl Cruciality {
    pub const ALL: [Cruciality; 2] = [Cruciality::Crucial, Cruciality::Minor];

    pub fn sigil(self) -> char {
        match self {
            Cruciality::Crucial => '!',
            Cruciality::Minor => '?',
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Judgment {
    Worse,
    Neutral,
    Better,
}

impl Judgment {
    pub const ALL: [Judgment; 3] = [Judgment::Worse, Judgment::Neutral, Judgment::Better];

    pub fn as_str(self) -> &'static str {
        match self {
            Judgment::Worse => "worse",
            Judgment::Neutral => "neutral",
            Judgment::Better => "better",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemSide {
    pub ordinal: usize,
    pub path: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedItem {
    pub resource_type: String,
    /// Key of the aligned object pair; cruciality defaults are keyed by it.
    pub object: String,
    #[serde(default)]
    pub pd: Option<ItemSide>,
    #[serde(default)]
    pub hb: Option<ItemSide>,
    pub tag: Tag,
    #[serde(default)]
    pub preference: Option<Preference>,
    /// Item-level override of the object's default.
    #[serde(default)]
    pub cruciality: Option<Cruciality>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub ambiguous: bool,
}

impl AnnotatedItem {
    pub fn path(&self) -> &str {
        self.pd.as_ref().or(self.hb.as_ref()).map_or("", |s| s.path.as_str())
    }

    pub fn judgment(&self) -> Judgment {
        match (self.tag, self.preference) {
            (Tag::Hallucination, _) => Judgment::Worse,
            (_, Some(Preference::Baseline)) => Judgment::Worse,
            (_, Some(Preference::Prediction)) => Judgment::Better,
            (_, None) => Judgment::Neutral,
        }
    }

    /// Checks presence rules for the tag.
    pub fn check(&self) -> Result<(), String> {
        let path = self.path();
        let (pd, hb) = (self.pd.as_ref(), self.hb.as_ref());
        match (self.tag, pd, hb) {
            (_, None, None) => Err("item has neither a PD nor an HB side".into()),
            (Tag::PdOnly, _, Some(_)) => Err(format!("`+` item {path} has an HB side")),
            (Tag::HbOnly, Some(_), _) => Err(format!("`-` item {path} has a PD side")),
            (Tag::Identical, Some(a), Some(b)) if a.value != b.value => {
                Err(format!("`==` item {path} has differing values"))
            }
            (Tag::Identical | Tag::Related | Tag::Differ, None, _)
            | (Tag::Identical | Tag::Related | Tag::Differ, _, None) => {
                Err(format!("`{}` item {path} needs both sides", self.tag.sigil()))
            }
            (Tag::Hallucination, None, _) => Err(format!("`X` item {path} has no PD side")),
            _ => Ok(()),
        }
    }

    pub fn bracket(&self) -> BracketCode {
        BracketCode {
            preference: self.preference,
            tag: self.tag,
            hb_absent: self.tag == Tag::Hallucination && self.hb.is_none(),
            cruciality: self.cruciality,
        }
    }
}

/// Compact annotation code such as `[|+-?]`, `[X+?]` or `[==]`:
/// optional preference, tag, `+` after `X` when the baseline lacks the
/// item, optional cruciality override.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BracketCode {
    pub preference: Option<Preference>,
    pub tag: Tag,
    pub hb_absent: bool,
    pub cruciality: Option<Cruciality>,
}

impl fmt::Display for BracketCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        if let Some(p) = self.preference {
            write!(f, "{}", p.sigil())?;
        }
        f.write_str(self.tag.sigil())?;
        if self.hb_absent {
            f.write_str("+")?;
        }
        if let Some(c) = self.cruciality {
            write!(f, "{}", c.sigil())?;
        }
        f.write_str("]")
    }
}

impl FromStr for BracketCode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("bad annotation code `{s}`");
        let mut rest = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')).ok_or_else(bad)?;
        let preference = match rest.chars().next() {
            Some('/') => Some(Preference::Prediction),
            Some('|') => Some(Preference::Baseline),
            _ => None,
        };
        if preference.is_some() {
            rest = &rest[1..];
        }
        let cruciality = match rest.chars().last() {
            Some('!') => Some(Cruciality::Crucial),
            Some('?') => Some(Cruciality::Minor),
            _ => None,
        };
        if cruciality.is_some() {
            rest = &rest[..rest.len() - 1];
        }
        let (tag, hb_absent) = match rest {
            "=" => (Tag::Related, false),
            "==" => (Tag::Identical, false),
            "+" => (Tag::PdOnly, false),
            "-" => (Tag::HbOnly, false),
            "+-" => (Tag::Differ, false),
            "X" => (Tag::Hallucination, false),
            "X+" => (Tag::Hallucination, true),
            _ => return Err(bad()),
        };
        Ok(Self { preference, tag, hb_absent, cruciality })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationHeader {
    /// Object key to default cruciality.
    #[serde(default)]
    pub cruciality_defaults: BTreeMap<String, Cruciality>,
    /// Used when neither item nor object carries a mark.
    #[serde(default)]
    pub fallback: Option<Cruciality>,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: AnnotationHeader,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotationSet {
    pub header: AnnotationHeader,
    pub items: Vec<AnnotatedItem>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("annotation line {line}: {message}")]
pub struct AnnotationError {
    pub line: usize,
    pub message: String,
}

impl AnnotationSet {
    pub fn new(items: Vec<AnnotatedItem>) -> Self {
        Self { header: AnnotationHeader::default(), items }
    }

    /// Item override, else object default, else fallback.
    pub fn cruciality_of(&self, item: &AnnotatedItem) -> Option<Cruciality> {
        item.cruciality.or_else(|| self.header.cruciality_defaults.get(&item.object).copied()).or(self.header.fallback)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&HeaderLine { header: self.header.clone() }).expect("header serializes");
        out.push('\n');
        for item in &self.items {
            out.push_str(&serde_json::to_string(item).expect("item serializes"));
            out.push('\n');
        }
        out
    }

    /// Line 1 is the header; each later non-blank line is one item.
    pub fn parse(text: &str) -> Result<Self, AnnotationError> {
        let mut lines = text.lines().enumerate();
        let header = match lines.next() {
            Some((_, l)) => {
                serde_json::from_str::<HeaderLine>(l)
                    .map_err(|e| AnnotationError { line: 1, message: format!("bad header: {e}") })?
                    .header
            }
            None => return Err(AnnotationError { line: 1, message: "empty annotation file".into() }),
        };
        let mut items = Vec::new();
        for (i, l) in lines {
            if l.trim().is_empty() {
                continue;
            }
            let item: AnnotatedItem =
                serde_json::from_str(l).map_err(|e| AnnotationError { line: i + 1, message: e.to_string() })?;
            item.check().map_err(|message| AnnotationError { line: i + 1, message })?;
            items.push(item);
        }
        Ok(Self { header, items })
    }

    pub fn load(path: &Path) -> Result<Self, AnnotationError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AnnotationError { line: 0, message: format!("{}: {e}", path.display()) })?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fhir::{parse_bundle, Bundle};
    use serde_json::json;

    fn bundle(v: Value) -> Bundle {
        parse_bundle(&v.to_string()).unwrap().value
    }

    fn snomed(code: &str, display: &str) -> Value {
        json!({"coding":[{"system":"http://snomed.info/sct","code":code,"display":display}]})
    }

    fn condition(id: &str, code: Value, extra: Value) -> Value {
        let mut c = json!({"resourceType":"Condition","id":id,"subject":{"reference":"Patient/p1"},"code":code});
        c.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
        json!({"resource": c})
    }

    fn patient() -> Value {
        json!({"resource":{"resourceType":"Patient","id":"p1","name":[{"family":"Jung","given":["Lea"]}],"birthDate":"1980-05-01"}})
    }

    #[test]
    fn patient_items() {
        let b = bundle(json!({"resourceType":"Bundle","type":"collection","entry":[patient()]}));
        let paths: Vec<String> = itemize(&b).into_iter().map(|i| i.path).collect();
        assert_eq!(paths, ["Patient.birthDate", "Patient.name[0]"]);
    }

    #[test]
    fn severity_is_one_item() {
        let b = bundle(json!({"resourceType":"Bundle","type":"collection","entry":[
            patient(),
            condition("c1", snomed("422400008", "Vomiting"), json!({"severity": snomed("255604002", "Mild")})),
        ]}));
        let items = itemize(&b);
        let sev: Vec<&Item> = items.iter().filter(|i| i.path.starts_with("Condition.severity")).collect();
        assert_eq!(sev.len(), 1);
        assert_eq!(sev[0].path, "Condition.severity");
        assert_eq!(sev[0].value["coding"][0]["code"], "255604002");
        assert_eq!(sev[0].ordinal, 2);
        assert!(itemize(&Bundle::collection(vec![])).is_empty());
    }

    #[test]
    fn body_site_difference_left_for_annotator() {
        let pd = bundle(json!({"resourceType":"Bundle","type":"collection","entry":[
            patient(), condition("c1", snomed("422400008", "Vomiting"), json!({"bodySite":[{"text":"Stirnbereich"}]}))]}));
        let hb = bundle(json!({"resourceType":"Bundle","type":"collection","entry":[
            patient(), condition("c9", snomed("422400008", "Vomiting"), json!({"bodySite":[snomed("52795006","Forehead structure")]}))]}));
        let diff = prediff(&pd, &hb);
        let site = diff.iter().find(|a| a.path() == "Condition.bodySite[0]").unwrap();
        assert_eq!(site.tag, Tag::Differ);
        assert_eq!(site.preference, None);
        assert!(diff.iter().filter(|a| a.path() != "Condition.bodySite[0]").all(|a| a.tag == Tag::Identical));
    }

    #[test]
    fn missing_dose_type_is_hb_only() {
        let ms = |dar: Value| {
            json!({"resource":{"resourceType":"MedicationStatement","id":"m1","status":"active",
            "subject":{"reference":"Patient/p1"},"medicationCodeableConcept":snomed("387207008","Ibuprofen"),
            "dosage":[{"doseAndRate":[dar]}]}})
        };
        let q = json!({"value":400,"unit":"mg"});
        let pd = bundle(
            json!({"resourceType":"Bundle","type":"collection","entry":[patient(), ms(json!({"doseQuantity":q}))]}),
        );
        let hb = bundle(json!({"resourceType":"Bundle","type":"collection","entry":[patient(), ms(json!({
            "type":{"coding":[{"system":"http://terminology.hl7.org/CodeSystem/dose-rate-type","code":"ordered","display":"Ordered"}]},
            "doseQuantity":q}))]}));
        let diff = prediff(&pd, &hb);
        let t = diff.iter().find(|a| a.path() == "MedicationStatement.dosage[0].doseAndRate[0].type").unwrap();
        assert_eq!(t.tag, Tag::HbOnly);
        assert!(t.pd.is_none());
        assert_eq!(diff.iter().filter(|a| a.tag != Tag::Identical).count(), 1);
    }

    #[test]
    fn conditions_align_by_code_not_position() {
        let pd = bundle(json!({"resourceType":"Bundle","type":"collection","entry":[patient(),
            condition("a", snomed("25064002","Headache"), json!({})),
            condition("b", snomed("422400008","Vomiting"), json!({}))]}));
        let hb = bundle(json!({"resourceType":"Bundle","type":"collection","entry":[patient(),
            condition("x", snomed("422400008","Vomiting"), json!({})),
            condition("y", json!({"text":"Kopfschmerz, Headache"}), json!({}))]}));
        let diff = prediff(&pd, &hb);
        let codes: Vec<(Tag, usize, usize)> = diff
            .iter()
            .filter(|a| a.path() == "Condition.code")
            .map(|a| (a.tag, a.pd.as_ref().unwrap().ordinal, a.hb.as_ref().unwrap().ordinal))
            .collect();
        assert_eq!(codes, [(Tag::Differ, 2, 3), (Tag::Identical, 3, 2)]);
    }

    #[test]
    fn identical_codes_flag_ambiguity() {
        let c = |id| condition(id, snomed("422400008", "Vomiting"), json!({}));
        let b = bundle(json!({"resourceType":"Bundle","type":"collection","entry":[patient(), c("a"), c("b")]}));
        let diff = prediff(&b, &b);
        assert!(diff.iter().all(|a| a.tag == Tag::Identical));
        assert!(diff.iter().filter(|a| a.resource_type == "Condition").all(|a| a.ambiguous));
    }

    #[test]
    fn bracket_codes_round_trip() {
        for code in ["[|+-?]", "[X+?]", "[-?]", "[==]", "[/+-!]", "[=]", "[X!]", "[/+]"] {
            assert_eq!(code.parse::<BracketCode>().unwrap().to_string(), code);
        }
        for bad in ["", "[]", "[?]", "[/|==]", "[Y]", "[+-+]", "==", "[-+?]"] {
            assert!(bad.parse::<BracketCode>().is_err(), "{bad}");
        }
        let b: BracketCode = "[|+-?]".parse().unwrap();
        assert_eq!(
            (b.preference, b.tag, b.cruciality),
            (Some(Preference::Baseline), Tag::Differ, Some(Cruciality::Minor))
        );
    }

    fn item(tag: Tag, pd: bool, hb: bool) -> AnnotatedItem {
        let s = |v: i64| ItemSide { ordinal: 1, path: "Condition.code".into(), value: json!(v) };
        AnnotatedItem {
            resource_type: "Condition".into(),
            object: "hb:Condition/c1".into(),
            pd: pd.then(|| s(1)),
            hb: hb.then(|| s(if tag == Tag::Identical { 1 } else { 2 })),
            tag,
            preference: None,
            cruciality: None,
            note: String::new(),
            ambiguous: false,
        }
    }

    #[test]
    fn presence_rules() {
        assert!(item(Tag::PdOnly, true, false).check().is_ok());
        assert!(item(Tag::PdOnly, true, true).check().is_err());
        assert!(item(Tag::HbOnly, true, true).check().is_err());
        assert!(item(Tag::HbOnly, false, true).check().is_ok());
        assert!(item(Tag::Identical, true, true).check().is_ok());
        let mut neq = item(Tag::Identical, true, true);
        neq.hb.as_mut().unwrap().value = json!(3);
        assert!(neq.check().is_err());
        assert!(item(Tag::Hallucination, true, false).check().is_ok());
        assert!(item(Tag::Hallucination, false, true).check().is_err());
        assert_eq!(item(Tag::Hallucination, true, false).bracket().to_string(), "[X+]");
    }

    #[test]
    fn judgment_mapping() {
        let mut x = item(Tag::Hallucination, true, false);
        x.preference = Some(Preference::Prediction);
        assert_eq!(x.judgment(), Judgment::Worse);
        let mut d = item(Tag::Differ, true, true);
        assert_eq!(d.judgment(), Judgment::Neutral);
        d.preference = Some(Preference::Prediction);
        assert_eq!(d.judgment(), Judgment::Better);
        d.preference = Some(Preference::Baseline);
        assert_eq!(d.judgment(), Judgment::Worse);
    }

    #[test]
    fn cruciality_override_wins() {
        let mut set = AnnotationSet::new(vec![item(Tag::Differ, true, true)]);
        assert!(aggregate(&set).is_err());
        set.header.cruciality_defaults.insert("hb:Condition/c1".into(), Cruciality::Crucial);
        assert_eq!(aggregate(&set).unwrap().get(Tag::Differ, Cruciality::Crucial, Judgment::Neutral), 1);
        set.items[0].cruciality = Some(Cruciality::Minor);
        assert_eq!(aggregate(&set).unwrap().get(Tag::Differ, Cruciality::Minor, Judgment::Neutral), 1);
    }

    #[test]
    fn empty_matrix() {
        let m = aggregate(&AnnotationSet::default()).unwrap();
        assert_eq!(m.grand_total(), 0);
        assert_eq!(m.hallucination_rate(), 0.0);
        let text = render_matrix(&m);
        assert!(text.contains("hallucination rate: 0/0 = 0.000%"));
        assert_eq!(matrix_csv(&m).lines().count(), 1 + 36);
    }

    #[test]
    fn annotation_file_round_trip_and_errors() {
        let mut set = AnnotationSet::new(vec![item(Tag::PdOnly, true, false), item(Tag::HbOnly, false, true)]);
        set.header.fallback = Some(Cruciality::Minor);
        assert_eq!(AnnotationSet::parse(&set.to_jsonl()).unwrap(), set);
        let broken = set.to_jsonl().replacen("\"tag\":\"-\"", "\"tag\":\"+\"", 1);
        let err = AnnotationSet::parse(&broken).unwrap_err();
        assert_eq!(err.line, 3);
    }
}
