//! JSON to typed-model decoding.
//!
//! Decoding goes through `serde_json::Value` rather than derived
//! `Deserialize` so that unknown elements can be reported as warnings with
//! their full path instead of being dropped or rejected outright.

use serde_json::{Map, Value};
use thiserror::Error;

use super::issue::{render_issues, IssueKind, ValidationIssue};
use super::types::*;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("document is not a JSON object")]
    NotAnObject,
    #[error("document has no resourceType")]
    MissingResourceType,
    #[error("{found} not in supported set (Patient, Condition, MedicationStatement)")]
    UnsupportedType { found: String },
    #[error("malformed document:\n{}", render_issues(.issues))]
    Malformed { issues: Vec<ValidationIssue> },
}

impl ParseError {
    /// Structural issues when the failure is `Malformed`, otherwise a single
    /// synthesized issue describing the failure.
    pub fn issues(&self) -> Vec<ValidationIssue> {
        match self {
            ParseError::Malformed { issues } => issues.clone(),
            ParseError::UnsupportedType { found } => vec![ValidationIssue::error(
                IssueKind::WrongType,
                "resourceType",
                format!("{found} not in supported set"),
            )],
            other => vec![ValidationIssue::error(IssueKind::BadFormat, "$", other.to_string())],
        }
    }
}

/// A decoded value plus the non-fatal issues found while decoding it.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub value: T,
    pub warnings: Vec<ValidationIssue>,
}

pub fn parse_json(text: &str) -> Result<Value, ParseError> {
    serde_json::from_str(text)
        .map_err(|e| ParseError::Syntax { offset: byte_offset(text, e.line(), e.column()), message: e.to_string() })
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

/// Parses a single Patient, Condition or MedicationStatement.
pub fn parse_resource(text: &str) -> Result<Parsed<Resource>, ParseError> {
    let value = parse_json(text)?;
    resource_from_value(&value)
}

/// Parses either a supported resource or a Bundle.
pub fn parse_document(text: &str) -> Result<Parsed<Document>, ParseError> {
    let value = parse_json(text)?;
    document_from_value(&value)
}

pub fn parse_bundle(text: &str) -> Result<Parsed<Bundle>, ParseError> {
    let value = parse_json(text)?;
    bundle_from_value(&value)
}

pub fn document_from_value(value: &Value) -> Result<Parsed<Document>, ParseError> {
    if resource_type_of(value)? == "Bundle" {
        let p = bundle_from_value(value)?;
        Ok(Parsed { value: Document::Bundle(p.value), warnings: p.warnings })
    } else {
        let p = resource_from_value(value)?;
        Ok(Parsed { value: Document::Resource(p.value), warnings: p.warnings })
    }
}

fn resource_type_of(value: &Value) -> Result<&str, ParseError> {
    let obj = value.as_object().ok_or(ParseError::NotAnObject)?;
    match obj.get("resourceType") {
        Some(Value::String(s)) => Ok(s),
        _ => Err(ParseError::MissingResourceType),
    }
}

pub fn resource_from_value(value: &Value) -> Result<Parsed<Resource>, ParseError> {
    let rt = resource_type_of(value)?;
    let mut d = Decoder::default();
    let resource = d.resource(value, rt, rt)?;
    d.finish(resource)
}

pub fn bundle_from_value(value: &Value) -> Result<Parsed<Bundle>, ParseError> {
    let rt = resource_type_of(value)?;
    if rt != "Bundle" {
        return Err(ParseError::Malformed {
            issues: vec![ValidationIssue::error(
                IssueKind::WrongType,
                "resourceType",
                format!("expected Bundle, found {rt}"),
            )],
        });
    }
    let mut d = Decoder::default();
    let obj = value.as_object().ok_or(ParseError::NotAnObject)?;
    d.check_keys(obj, "Bundle", &["resourceType", "type", "entry"]);
    let bundle_type = d.string(obj, "type", "Bundle");
    let mut entry = Vec::new();
    for (i, e) in d.array(obj, "entry", "Bundle").iter().enumerate() {
        let path = format!("Bundle.entry[{i}]");
        let Some(eobj) = d.object(e, &path) else { continue };
        d.check_keys(eobj, &path, &["resource"]);
        let rpath = format!("{path}.resource");
        match eobj.get("resource") {
            None => d.error(IssueKind::MissingRequired, &rpath, "entry has no resource"),
            Some(rv) => match rv.get("resourceType").and_then(Value::as_str) {
                None => {
                    d.error(IssueKind::MissingRequired, format!("{rpath}.resourceType"), "resource has no resourceType")
                }
                Some(rt) => match d.resource(rv, rt, &rpath) {
                    Ok(resource) => entry.push(BundleEntry { resource }),
                    Err(ParseError::UnsupportedType { found }) => d.error(
                        IssueKind::WrongType,
                        format!("{rpath}.resourceType"),
                        format!("{found} not in supported set"),
                    ),
                    Err(e) => return Err(e),
                },
            },
        }
    }
    d.finish(Bundle { bundle_type, entry })
}

#[derive(Default)]
struct Decoder {
    issues: Vec<ValidationIssue>,
}

impl Decoder {
    fn finish<T>(self, value: T) -> Result<Parsed<T>, ParseError> {
        if self.issues.iter().any(ValidationIssue::is_error) {
            Err(ParseError::Malformed { issues: self.issues })
        } else {
            Ok(Parsed { value, warnings: self.issues })
        }
    }

    fn error(&mut self, kind: IssueKind, path: impl Into<String>, msg: impl Into<String>) {
        self.issues.push(ValidationIssue::error(kind, path, msg));
    }

    fn wrong_type(&mut self, path: &str, expected: &str, found: &Value) {
        self.error(IssueKind::WrongType, path, format!("expected {expected}, found {}", json_kind(found)));
    }

    fn check_keys(&mut self, obj: &Map<String, Value>, path: &str, known: &[&str]) {
        for key in obj.keys() {
            if !known.contains(&key.as_str()) {
                self.issues.push(ValidationIssue::warning(
                    IssueKind::UnknownField,
                    format!("{path}.{key}"),
                    format!("element `{key}` is not modeled and was not imported"),
                ));
            }
        }
    }

    fn object<'v>(&mut self, v: &'v Value, path: &str) -> Option<&'v Map<String, Value>> {
        match v {
            Value::Object(m) => Some(m),
            other => {
                self.wrong_type(path, "object", other);
                None
            }
        }
    }

    fn string(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<String> {
        match obj.get(key)? {
            Value::String(s) => Some(s.clone()),
            other => {
                self.wrong_type(&format!("{path}.{key}"), "string", other);
                None
            }
        }
    }

    fn array<'v>(&mut self, obj: &'v Map<String, Value>, key: &str, path: &str) -> &'v [Value] {
        match obj.get(key) {
            None => &[],
            Some(Value::Array(a)) => a,
            Some(other) => {
                self.wrong_type(&format!("{path}.{key}"), "array", other);
                &[]
            }
        }
    }

    fn strings(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        for (i, v) in self.array(obj, key, path).iter().enumerate() {
            match v {
                Value::String(s) => out.push(s.clone()),
                other => self.wrong_type(&format!("{path}.{key}[{i}]"), "string", other),
            }
        }
        out
    }

    fn decimal(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<f64> {
        match obj.get(key)? {
            Value::Number(n) => n.as_f64(),
            other => {
                self.wrong_type(&format!("{path}.{key}"), "number", other);
                None
            }
        }
    }

    fn unsigned(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<u32> {
        let v = obj.get(key)?;
        match v.as_u64().and_then(|n| u32::try_from(n).ok()) {
            Some(n) => Some(n),
            None => {
                self.wrong_type(&format!("{path}.{key}"), "unsigned integer", v);
                None
            }
        }
    }

    fn nested<T>(
        &mut self,
        obj: &Map<String, Value>,
        key: &str,
        path: &str,
        f: fn(&mut Self, &Map<String, Value>, &str) -> T,
    ) -> Option<T> {
        let v = obj.get(key)?;
        let p = format!("{path}.{key}");
        let m = self.object(v, &p)?;
        Some(f(self, m, &p))
    }

    fn nested_list<T>(
        &mut self,
        obj: &Map<String, Value>,
        key: &str,
        path: &str,
        f: fn(&mut Self, &Map<String, Value>, &str) -> T,
    ) -> Vec<T> {
        let mut out = Vec::new();
        for (i, v) in self.array(obj, key, path).iter().enumerate() {
            let p = format!("{path}.{key}[{i}]");
            if let Some(m) = self.object(v, &p) {
                out.push(f(self, m, &p));
            }
        }
        out
    }

    fn resource(&mut self, v: &Value, rt: &str, path: &str) -> Result<Resource, ParseError> {
        let obj = v.as_object().ok_or(ParseError::NotAnObject)?;
        Ok(match rt {
            "Patient" => Resource::Patient(self.patient(obj, path)),
            "Condition" => Resource::Condition(self.condition(obj, path)),
            "MedicationStatement" => Resource::MedicationStatement(self.medication_statement(obj, path)),
            other => return Err(ParseError::UnsupportedType { found: other.to_owned() }),
        })
    }

    fn patient(&mut self, obj: &Map<String, Value>, path: &str) -> Patient {
        self.check_keys(obj, path, &["resourceType", "id", "name", "birthDate", "gender", "address"]);
        Patient {
            id: self.string(obj, "id", path),
            name: self.nested_list(obj, "name", path, Self::human_name),
            birth_date: self.string(obj, "birthDate", path),
            gender: self.string(obj, "gender", path),
            address: self.nested_list(obj, "address", path, Self::address),
        }
    }

    fn condition(&mut self, obj: &Map<String, Value>, path: &str) -> Condition {
        self.check_keys(
            obj,
            path,
            &[
                "resourceType",
                "id",
                "subject",
                "code",
                "clinicalStatus",
                "verificationStatus",
                "severity",
                "bodySite",
                "category",
                "onsetDateTime",
            ],
        );
        Condition {
            id: self.string(obj, "id", path),
            subject: self.nested(obj, "subject", path, Self::reference),
            code: self.nested(obj, "code", path, Self::codeable_concept),
            clinical_status: self.nested(obj, "clinicalStatus", path, Self::codeable_concept),
            verification_status: self.nested(obj, "verificationStatus", path, Self::codeable_concept),
            severity: self.nested(obj, "severity", path, Self::codeable_concept),
            body_site: self.nested_list(obj, "bodySite", path, Self::codeable_concept),
            category: self.nested_list(obj, "category", path, Self::codeable_concept),
            onset_date_time: self.string(obj, "onsetDateTime", path),
        }
    }

    fn medication_statement(&mut self, obj: &Map<String, Value>, path: &str) -> MedicationStatement {
        self.check_keys(obj, path, &["resourceType", "id", "subject", "status", "medicationCodeableConcept", "dosage"]);
        MedicationStatement {
            id: self.string(obj, "id", path),
            subject: self.nested(obj, "subject", path, Self::reference),
            status: self.string(obj, "status", path),
            medication_codeable_concept: self.nested(obj, "medicationCodeableConcept", path, Self::codeable_concept),
            dosage: self.nested_list(obj, "dosage", path, Self::dosage),
        }
    }

    fn coding(&mut self, obj: &Map<String, Value>, path: &str) -> Coding {
        self.check_keys(obj, path, &["system", "code", "display"]);
        Coding {
            system: self.string(obj, "system", path),
            code: self.string(obj, "code", path),
            display: self.string(obj, "display", path),
        }
    }

    fn codeable_concept(&mut self, obj: &Map<String, Value>, path: &str) -> CodeableConcept {
        self.check_keys(obj, path, &["coding", "text"]);
        CodeableConcept {
            coding: self.nested_list(obj, "coding", path, Self::coding),
            text: self.string(obj, "text", path),
        }
    }

    fn reference(&mut self, obj: &Map<String, Value>, path: &str) -> Reference {
        self.check_keys(obj, path, &["reference", "display"]);
        Reference { reference: self.string(obj, "reference", path), display: self.string(obj, "display", path) }
    }

    fn human_name(&mut self, obj: &Map<String, Value>, path: &str) -> HumanName {
        self.check_keys(obj, path, &["use", "family", "given"]);
        HumanName {
            name_use: self.string(obj, "use", path),
            family: self.string(obj, "family", path),
            given: self.strings(obj, "given", path),
        }
    }

    fn address(&mut self, obj: &Map<String, Value>, path: &str) -> Address {
        self.check_keys(obj, path, &["line", "city", "postalCode", "country"]);
        Address {
            line: self.strings(obj, "line", path),
            city: self.string(obj, "city", path),
            postal_code: self.string(obj, "postalCode", path),
            country: self.string(obj, "country", path),
        }
    }

    fn quantity(&mut self, obj: &Map<String, Value>, path: &str) -> Quantity {
        self.check_keys(obj, path, &["value", "unit", "system", "code"]);
        Quantity {
            value: self.decimal(obj, "value", path),
            unit: self.string(obj, "unit", path),
            system: self.string(obj, "system", path),
            code: self.string(obj, "code", path),
        }
    }

    fn dose_and_rate(&mut self, obj: &Map<String, Value>, path: &str) -> DoseAndRate {
        self.check_keys(obj, path, &["type", "doseQuantity"]);
        DoseAndRate {
            dose_type: self.nested(obj, "type", path, Self::codeable_concept),
            dose_quantity: self.nested(obj, "doseQuantity", path, Self::quantity),
        }
    }

    fn timing_repeat(&mut self, obj: &Map<String, Value>, path: &str) -> TimingRepeat {
        self.check_keys(obj, path, &["frequency", "period", "periodUnit"]);
        TimingRepeat {
            frequency: self.unsigned(obj, "frequency", path),
            period: self.decimal(obj, "period", path),
            period_unit: self.string(obj, "periodUnit", path),
        }
    }

    fn timing(&mut self, obj: &Map<String, Value>, path: &str) -> Timing {
        self.check_keys(obj, path, &["code", "repeat"]);
        Timing {
            code: self.nested(obj, "code", path, Self::codeable_concept),
            repeat: self.nested(obj, "repeat", path, Self::timing_repeat),
        }
    }

    fn dosage(&mut self, obj: &Map<String, Value>, path: &str) -> Dosage {
        self.check_keys(obj, path, &["text", "doseAndRate", "timing"]);
        Dosage {
            text: self.string(obj, "text", path),
            dose_and_rate: self.nested_list(obj, "doseAndRate", path, Self::dose_and_rate),
            timing: self.nested(obj, "timing", path, Self::timing),
        }
    }
}

fn json_kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}
