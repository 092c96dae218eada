use std::collections::HashSet;

use chrono::{DateTime, NaiveDate};

use super::issue::{IssueKind, ValidationIssue};
use super::types::*;

pub const CONDITION_CLINICAL_SYSTEM: &str = "http://terminology.hl7.org/CodeSystem/condition-clinical";
pub const CONDITION_VERIFICATION_SYSTEM: &str = "http://terminology.hl7.org/CodeSystem/condition-ver-status";

/// Required binding for `Condition.clinicalStatus`.
pub const CLINICAL_STATUS_CODES: [&str; 6] = ["active", "recurrence", "relapse", "inactive", "remission", "resolved"];
pub const VERIFICATION_STATUS_CODES: [&str; 6] =
    ["unconfirmed", "provisional", "differential", "confirmed", "refuted", "entered-in-error"];
pub const GENDER_CODES: [&str; 4] = ["male", "female", "other", "unknown"];
pub const NAME_USE_CODES: [&str; 7] = ["usual", "official", "temp", "nickname", "anonymous", "old", "maiden"];
pub const MEDICATION_STATUS_CODES: [&str; 8] =
    ["active", "completed", "entered-in-error", "intended", "stopped", "on-hold", "unknown", "not-taken"];
pub const PERIOD_UNIT_CODES: [&str; 7] = ["s", "min", "h", "d", "wk", "mo", "a"];

/// Checks every modeled invariant of a standalone resource. References are
/// checked for shape only; resolution needs the enclosing Bundle.
///
/// The result is sorted by path (stable, so issues on the same element keep
/// their discovery order).
pub fn validate(resource: &Resource) -> Vec<ValidationIssue> {
    let root = resource.resource_type();
    let mut v = Validator { issues: Vec::new() };
    v.resource(resource, root);
    let mut issues = v.issues;
    issues.sort_by(|a, b| a.path.cmp(&b.path));
    issues
}

/// Validates a Bundle: each entry, the bundle type, id uniqueness and
/// reference resolution.
pub fn validate_bundle(bundle: &Bundle) -> Vec<ValidationIssue> {
    let mut v = Validator { issues: Vec::new() };
    match bundle.bundle_type.as_deref() {
        None => v.missing("Bundle.type", "Bundle.type is required"),
        Some("collection") => {}
        Some(other) => v.push(
            IssueKind::BadBinding,
            "Bundle.type",
            format!("bundle type `{other}` not supported; expected `collection`"),
        ),
    }
    for (i, e) in bundle.entry.iter().enumerate() {
        v.resource(&e.resource, &format!("Bundle.entry[{i}].resource"));
    }
    v.issues.extend(reference_issues(bundle));
    let mut issues = v.issues;
    issues.sort_by(|a, b| a.path.cmp(&b.path));
    issues
}

/// Duplicate `Type/id` keys and references that do not resolve within the
/// bundle.
pub fn reference_issues(bundle: &Bundle) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let mut keys = HashSet::new();
    for (i, r) in bundle.resources().enumerate() {
        if let Some(key) = r.local_reference() {
            if !keys.insert(key.clone()) {
                issues.push(ValidationIssue::error(
                    IssueKind::BadFormat,
                    format!("Bundle.entry[{i}].resource.id"),
                    format!("duplicate resource key {key}"),
                ));
            }
        }
    }
    for (i, r) in bundle.resources().enumerate() {
        for (element, reference) in r.references() {
            let Some(target) = reference.reference.as_deref() else { continue };
            if !keys.contains(target) {
                issues.push(ValidationIssue::error(
                    IssueKind::DanglingReference,
                    format!("Bundle.entry[{i}].resource.{element}.reference"),
                    format!("reference {target} does not resolve within the bundle"),
                ));
            }
        }
    }
    issues
}

pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'.')
}

/// FHIR `date`: `YYYY`, `YYYY-MM` or `YYYY-MM-DD`, each a real calendar value.
pub fn is_valid_date(s: &str) -> bool {
    let b = s.as_bytes();
    let digits = |r: std::ops::Range<usize>| b[r].iter().all(u8::is_ascii_digit);
    match b.len() {
        4 => digits(0..4),
        7 => digits(0..4) && b[4] == b'-' && digits(5..7) && (1..=12).contains(&s[5..7].parse::<u32>().unwrap_or(0)),
        10 => NaiveDate::parse_from_str(s, "%Y-%m-%d").is_ok() && digits(0..4),
        _ => false,
    }
}

/// FHIR `dateTime`: a partial/full date, or a full timestamp with zone.
pub fn is_valid_date_time(s: &str) -> bool {
    if s.len() <= 10 {
        return is_valid_date(s);
    }
    DateTime::parse_from_rfc3339(s).is_ok() && is_valid_date(&s[..10])
}

struct Validator {
    issues: Vec<ValidationIssue>,
}

impl Validator {
    fn push(&mut self, kind: IssueKind, path: impl Into<String>, msg: impl Into<String>) {
        self.issues.push(ValidationIssue::error(kind, path, msg));
    }

    fn missing(&mut self, path: &str, msg: &str) {
        self.push(IssueKind::MissingRequired, path, msg);
    }

    fn text(&mut self, value: &Option<String>, path: &str) {
        if let Some(s) = value {
            self.non_empty(s, path);
        }
    }

    fn non_empty(&mut self, s: &str, path: &str) {
        if s.trim().is_empty() {
            self.push(IssueKind::BadFormat, path, "string values must not be empty");
        }
    }

    fn binding(&mut self, value: &str, path: &str, allowed: &[&str]) {
        if !allowed.contains(&value) {
            self.push(
                IssueKind::BadBinding,
                path,
                format!("code `{value}` not in required value set: {}", allowed.join(", ")),
            );
        }
    }

    fn resource(&mut self, r: &Resource, root: &str) {
        match r.id() {
            None => self.missing(&format!("{root}.id"), "resource id is required"),
            Some(id) if !is_valid_id(id) => self.push(
                IssueKind::BadFormat,
                format!("{root}.id"),
                format!("id `{id}` must match [A-Za-z0-9.-]{{1,64}}"),
            ),
            Some(_) => {}
        }
        match r {
            Resource::Patient(p) => self.patient(p, root),
            Resource::Condition(c) => self.condition(c, root),
            Resource::MedicationStatement(m) => self.medication_statement(m, root),
        }
    }

    fn patient(&mut self, p: &Patient, root: &str) {
        for (i, n) in p.name.iter().enumerate() {
            let path = format!("{root}.name[{i}]");
            if let Some(u) = &n.name_use {
                self.binding(u, &format!("{path}.use"), &NAME_USE_CODES);
            }
            self.text(&n.family, &format!("{path}.family"));
            for (j, g) in n.given.iter().enumerate() {
                self.non_empty(g, &format!("{path}.given[{j}]"));
            }
            if n.family.is_none() && n.given.is_empty() {
                self.missing(&path, "name needs a family or given part");
            }
        }
        if let Some(d) = &p.birth_date {
            if !is_valid_date(d) {
                self.push(
                    IssueKind::BadFormat,
                    format!("{root}.birthDate"),
                    format!("`{d}` is not a valid calendar date (YYYY, YYYY-MM or YYYY-MM-DD)"),
                );
            }
        }
        if let Some(g) = &p.gender {
            self.binding(g, &format!("{root}.gender"), &GENDER_CODES);
        }
        for (i, a) in p.address.iter().enumerate() {
            let path = format!("{root}.address[{i}]");
            for (j, l) in a.line.iter().enumerate() {
                self.non_empty(l, &format!("{path}.line[{j}]"));
            }
            self.text(&a.city, &format!("{path}.city"));
            self.text(&a.postal_code, &format!("{path}.postalCode"));
            self.text(&a.country, &format!("{path}.country"));
        }
    }

    fn condition(&mut self, c: &Condition, root: &str) {
        match &c.subject {
            None => self.missing(&format!("{root}.subject"), "Condition.subject is required"),
            Some(r) => self.subject(r, &format!("{root}.subject")),
        }
        if let Some(cc) = &c.code {
            self.codeable_concept(cc, &format!("{root}.code"));
        }
        if let Some(cc) = &c.clinical_status {
            self.bound_concept(cc, &format!("{root}.clinicalStatus"), &CLINICAL_STATUS_CODES);
        }
        if let Some(cc) = &c.verification_status {
            self.bound_concept(cc, &format!("{root}.verificationStatus"), &VERIFICATION_STATUS_CODES);
        }
        if let Some(cc) = &c.severity {
            self.codeable_concept(cc, &format!("{root}.severity"));
        }
        for (i, cc) in c.body_site.iter().enumerate() {
            self.codeable_concept(cc, &format!("{root}.bodySite[{i}]"));
        }
        for (i, cc) in c.category.iter().enumerate() {
            self.codeable_concept(cc, &format!("{root}.category[{i}]"));
        }
        if let Some(t) = &c.onset_date_time {
            if !is_valid_date_time(t) {
                self.push(
                    IssueKind::BadFormat,
                    format!("{root}.onsetDateTime"),
                    format!("`{t}` is not a valid dateTime"),
                );
            }
        }
    }

    fn medication_statement(&mut self, m: &MedicationStatement, root: &str) {
        match &m.subject {
            None => self.missing(&format!("{root}.subject"), "MedicationStatement.subject is required"),
            Some(r) => self.subject(r, &format!("{root}.subject")),
        }
        match &m.status {
            None => self.missing(&format!("{root}.status"), "MedicationStatement.status is required"),
            Some(s) => self.binding(s, &format!("{root}.status"), &MEDICATION_STATUS_CODES),
        }
        match &m.medication_codeable_concept {
            None => self
                .missing(&format!("{root}.medicationCodeableConcept"), "MedicationStatement.medication[x] is required"),
            Some(cc) => self.codeable_concept(cc, &format!("{root}.medicationCodeableConcept")),
        }
        for (i, d) in m.dosage.iter().enumerate() {
            self.dosage(d, &format!("{root}.dosage[{i}]"));
        }
    }

    fn dosage(&mut self, d: &Dosage, path: &str) {
        self.text(&d.text, &format!("{path}.text"));
        for (i, dr) in d.dose_and_rate.iter().enumerate() {
            let p = format!("{path}.doseAndRate[{i}]");
            if let Some(t) = &dr.dose_type {
                self.codeable_concept(t, &format!("{p}.type"));
            }
            if let Some(q) = &dr.dose_quantity {
                self.quantity(q, &format!("{p}.doseQuantity"));
            }
            if dr.dose_type.is_none() && dr.dose_quantity.is_none() {
                self.missing(&p, "doseAndRate needs a type or doseQuantity");
            }
        }
        if let Some(t) = &d.timing {
            let p = format!("{path}.timing");
            if let Some(cc) = &t.code {
                self.codeable_concept(cc, &format!("{p}.code"));
            }
            if let Some(r) = &t.repeat {
                if let Some(u) = &r.period_unit {
                    self.binding(u, &format!("{p}.repeat.periodUnit"), &PERIOD_UNIT_CODES);
                }
                if let Some(period) = r.period {
                    if !(period.is_finite() && period > 0.0) {
                        self.push(IssueKind::BadFormat, format!("{p}.repeat.period"), "period must be positive");
                    }
                }
            }
            if t.code.is_none() && t.repeat.is_none() {
                self.missing(&p, "timing needs a code or repeat");
            }
        }
    }

    fn quantity(&mut self, q: &Quantity, path: &str) {
        match q.value {
            None => self.missing(&format!("{path}.value"), "quantity value is required"),
            Some(v) if !v.is_finite() => {
                self.push(IssueKind::BadFormat, format!("{path}.value"), "quantity value must be finite")
            }
            Some(_) => {}
        }
        match &q.unit {
            None => self.missing(&format!("{path}.unit"), "quantity unit is required"),
            Some(u) => self.non_empty(u, &format!("{path}.unit")),
        }
        self.text(&q.system, &format!("{path}.system"));
        self.text(&q.code, &format!("{path}.code"));
        if q.code.is_some() && q.system.is_none() {
            self.missing(&format!("{path}.system"), "quantity system is required when a code is present");
        }
    }

    fn subject(&mut self, r: &Reference, path: &str) {
        self.reference(r, path);
        if let Some(target) = r.reference.as_deref() {
            if let Some((ty, _)) = target.split_once('/') {
                if ty != "Patient" && SUPPORTED_TYPES.contains(&ty) {
                    self.push(
                        IssueKind::WrongType,
                        format!("{path}.reference"),
                        format!("subject must reference a Patient, not {ty}"),
                    );
                }
            }
        }
    }

    fn reference(&mut self, r: &Reference, path: &str) {
        self.text(&r.display, &format!("{path}.display"));
        let Some(target) = r.reference.as_deref() else {
            self.missing(&format!("{path}.reference"), "reference target is required");
            return;
        };
        let ok = target.split_once('/').is_some_and(|(ty, id)| SUPPORTED_TYPES.contains(&ty) && is_valid_id(id));
        if !ok {
            self.push(
                IssueKind::BadFormat,
                format!("{path}.reference"),
                format!("`{target}` is not a local `Type/id` reference to a supported type"),
            );
        }
    }

    fn coding(&mut self, c: &Coding, path: &str) {
        match &c.code {
            None => self.missing(&format!("{path}.code"), "coding code is required"),
            Some(code) => {
                self.non_empty(code, &format!("{path}.code"));
                match &c.system {
                    None => self.missing(&format!("{path}.system"), "coding system is required when a code is present"),
                    Some(s) => self.non_empty(s, &format!("{path}.system")),
                }
            }
        }
        self.text(&c.display, &format!("{path}.display"));
    }

    fn codeable_concept(&mut self, cc: &CodeableConcept, path: &str) {
        if cc.coding.is_empty() && cc.text.is_none() {
            self.missing(path, "CodeableConcept needs a coding or text");
        }
        for (i, c) in cc.coding.iter().enumerate() {
            self.coding(c, &format!("{path}.coding[{i}]"));
        }
        self.text(&cc.text, &format!("{path}.text"));
    }

    /// Required binding: at least one coding, and every coded value in the set.
    fn bound_concept(&mut self, cc: &CodeableConcept, path: &str, allowed: &[&str]) {
        if cc.coding.is_empty() {
            self.push(
                IssueKind::BadBinding,
                path,
                format!("required binding needs a coding from: {}", allowed.join(", ")),
            );
            self.text(&cc.text, &format!("{path}.text"));
            return;
        }
        for (i, c) in cc.coding.iter().enumerate() {
            let p = format!("{path}.coding[{i}]");
            match &c.code {
                Some(code) => self.binding(code, &format!("{p}.code"), allowed),
                None => self.missing(&format!("{p}.code"), "coding code is required"),
            }
            if c.code.is_some() && c.system.is_none() {
                self.missing(&format!("{p}.system"), "coding system is required when a code is present");
            }
            self.text(&c.display, &format!("{p}.display"));
        }
        self.text(&cc.text, &format!("{path}.text"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn condition_with_status(code: &str) -> Resource {
        Resource::Condition(Condition {
            id: Some("c1".into()),
            subject: Some(Reference::to("Patient/p1")),
            clinical_status: Some(CodeableConcept::coded(Coding::new(CONDITION_CLINICAL_SYSTEM, code, None))),
            ..Default::default()
        })
    }

    #[test]
    fn missing_subject() {
        let c = Resource::Condition(Condition { id: Some("c1".into()), ..Default::default() });
        let issues = validate(&c);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].path, "Condition.subject");
        assert_eq!(issues[0].kind, IssueKind::MissingRequired);
    }

    #[test]
    fn cured_is_bad_binding_listing_legal_codes() {
        let issues = validate(&condition_with_status("cured"));
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].kind, IssueKind::BadBinding);
        assert_eq!(issues[0].path, "Condition.clinicalStatus.coding[0].code");
        for code in CLINICAL_STATUS_CODES {
            assert!(issues[0].message.contains(code));
        }
    }

    #[test]
    fn remission_is_clean() {
        assert!(validate(&condition_with_status("remission")).is_empty());
    }

    #[test]
    fn clinical_status_text_only_violates_binding() {
        let c = Resource::Condition(Condition {
            id: Some("c1".into()),
            subject: Some(Reference::to("Patient/p1")),
            clinical_status: Some(CodeableConcept::text("aktiv")),
            ..Default::default()
        });
        let issues = validate(&c);
        assert_eq!(issues[0].kind, IssueKind::BadBinding);
        assert_eq!(issues[0].path, "Condition.clinicalStatus");
    }

    #[test]
    fn dates() {
        for ok in ["1975", "1975-02", "1975-02-10", "2024-02-29"] {
            assert!(is_valid_date(ok), "{ok}");
        }
        for bad in ["1975-13", "2023-02-29", "10.02.1975", "75-02-10", ""] {
            assert!(!is_valid_date(bad), "{bad}");
        }
        assert!(is_valid_date_time("2023-06-20T08:30:00+02:00"));
        assert!(is_valid_date_time("2023-06-20"));
        assert!(!is_valid_date_time("2023-06-20T08:30:00"));
    }

    #[test]
    fn subject_must_be_patient() {
        let c = Resource::Condition(Condition {
            id: Some("c1".into()),
            subject: Some(Reference::to("Condition/c2")),
            ..Default::default()
        });
        let issues = validate(&c);
        assert_eq!(issues[0].kind, IssueKind::WrongType);
    }

    #[test]
    fn medication_statement_requirements() {
        let m = Resource::MedicationStatement(MedicationStatement {
            id: Some("m1".into()),
            subject: Some(Reference::to("Patient/p1")),
            status: Some("taking".into()),
            ..Default::default()
        });
        let kinds: Vec<_> = validate(&m).into_iter().map(|i| (i.path, i.kind)).collect();
        assert_eq!(
            kinds,
            [
                ("MedicationStatement.medicationCodeableConcept".to_string(), IssueKind::MissingRequired),
                ("MedicationStatement.status".to_string(), IssueKind::BadBinding),
            ]
        );
    }

    #[test]
    fn bundle_reference_resolution() {
        let p = Resource::Patient(Patient { id: Some("p1".into()), ..Default::default() });
        let c = Resource::Condition(Condition {
            id: Some("c1".into()),
            subject: Some(Reference::to("Patient/p9")),
            code: Some(CodeableConcept::text("Gastritis")),
            ..Default::default()
        });
        let issues = validate_bundle(&Bundle::collection([p, c]));
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].kind, IssueKind::DanglingReference);
        assert!(issues[0].message.contains("Patient/p9"));
    }
}
