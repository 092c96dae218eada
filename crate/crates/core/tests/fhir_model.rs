use fhirforge_core::fhir::{self, strategies, *};
use proptest::prelude::*;
use serde_json::Value;

const GOLDEN_COMPACT: &str = include_str!("fixtures/patient_condition_bundle.compact.json");
const GOLDEN_PRETTY: &str = include_str!("fixtures/patient_condition_bundle.pretty.json");

fn golden_resources() -> Vec<Resource> {
    let patient = Patient {
        id: Some("p1".into()),
        name: vec![HumanName {
            name_use: Some("official".into()),
            family: Some("Brandt".into()),
            given: vec!["Helga".into()],
        }],
        birth_date: Some("1958-03-14".into()),
        gender: Some("female".into()),
        address: vec![],
    };
    let condition = Condition {
        id: Some("c1".into()),
        subject: Some(Reference::to("Patient/p1")),
        code: Some(CodeableConcept::coded(Coding::new("http://snomed.info/sct", "422400008", Some("Vomiting")))),
        clinical_status: Some(CodeableConcept::coded(Coding::new(CONDITION_CLINICAL_SYSTEM, "active", None))),
        severity: Some(CodeableConcept::coded(Coding::new("http://snomed.info/sct", "255604002", Some("Mild")))),
        ..Default::default()
    };
    vec![patient.into(), condition.into()]
}

#[test]
fn two_entry_bundle_matches_golden_files() {
    let (bundle, issues) = make_bundle(golden_resources());
    assert!(issues.is_empty());
    assert!(validate_bundle(&bundle).is_empty());
    assert_eq!(serialize_bundle(&bundle).unwrap(), GOLDEN_COMPACT);
    assert_eq!(serialize_bundle_pretty(&bundle).unwrap(), GOLDEN_PRETTY);
    let reparsed = parse_bundle(GOLDEN_PRETTY).unwrap();
    assert!(reparsed.warnings.is_empty());
    assert_eq!(reparsed.value, bundle);
}

#[test]
fn clinical_status_binding_is_exact() {
    let with = |code: &str| {
        Resource::Condition(Condition {
            id: Some("c1".into()),
            subject: Some(Reference::to("Patient/p1")),
            clinical_status: Some(CodeableConcept::coded(Coding::new(CONDITION_CLINICAL_SYSTEM, code, None))),
            ..Default::default()
        })
    };
    for code in CLINICAL_STATUS_CODES {
        assert!(validate(&with(code)).is_empty(), "{code}");
    }
    for code in ["cured", "Active", "ACTIVE", "resolved ", "healed", "chronic", "x"] {
        let issues = validate(&with(code));
        assert_eq!(issues.len(), 1, "{code}");
        assert_eq!(issues[0].kind, IssueKind::BadBinding);
    }
}

/// Navigates a dotted path like `Condition.coding[0].code` in a JSON value.
fn resolve<'a>(doc: &'a Value, path: &str) -> Option<&'a Value> {
    let mut segments = path.split('.');
    let root = segments.next()?;
    if doc.get("resourceType").and_then(Value::as_str) != Some(root) {
        return None;
    }
    let mut cur = doc;
    for seg in segments {
        let (name, index) = match seg.split_once('[') {
            Some((n, rest)) => (n, Some(rest.trim_end_matches(']').parse::<usize>().ok()?)),
            None => (seg, None),
        };
        cur = cur.get(name)?;
        if let Some(i) = index {
            cur = cur.get(i)?;
        }
    }
    Some(cur)
}

fn parent(path: &str) -> &str {
    path.rsplit_once('.').map_or(path, |(p, _)| p)
}

fn mutated_resource() -> impl Strategy<Value = Resource> {
    (strategies::resource(), 0u8..6, "[a-z]{1,8}").prop_map(|(r, which, token)| match (r, which) {
        (Resource::Condition(mut c), 0) => {
            c.subject = None;
            c.into()
        }
        (Resource::Condition(mut c), 1) => {
            c.clinical_status = Some(CodeableConcept::coded(Coding::new(CONDITION_CLINICAL_SYSTEM, token, None)));
            c.into()
        }
        (Resource::Patient(mut p), 2) => {
            p.birth_date = Some(format!("{token}-13-45"));
            p.into()
        }
        (Resource::Patient(mut p), 3) => {
            p.gender = Some(token);
            p.into()
        }
        (Resource::MedicationStatement(mut m), 4) => {
            m.status = Some(token);
            m.medication_codeable_concept = None;
            m.into()
        }
        (Resource::MedicationStatement(mut m), _) => {
            m.subject = Some(Reference::to(format!("Observation/{}", token)));
            m.into()
        }
        (r, _) => r,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn round_trip(r in strategies::resource()) {
        prop_assert!(validate(&r).is_empty(), "{:?}", validate(&r));
        let text = serialize(&r).unwrap();
        let back = parse_resource(&text).unwrap();
        prop_assert!(back.warnings.is_empty());
        prop_assert_eq!(&back.value, &r);
        prop_assert_eq!(serialize(&back.value).unwrap(), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn serialization_is_deterministic(r in strategies::resource()) {
        prop_assert_eq!(serialize(&r).unwrap(), serialize(&r.clone()).unwrap());
    }

    #[test]
    fn generated_bundles_are_valid(b in strategies::bundle()) {
        prop_assert!(validate_bundle(&b).is_empty(), "{:?}", validate_bundle(&b));
        let text = serialize_bundle(&b).unwrap();
        prop_assert_eq!(parse_bundle(&text).unwrap().value, b);
    }

    #[test]
    fn issue_paths_exist_in_the_document(r in mutated_resource()) {
        let doc: Value = serde_json::from_str(&fhir::to_compact_unchecked(&r)).unwrap();
        for issue in validate(&r) {
            let target = if issue.kind == IssueKind::MissingRequired { parent(&issue.path) } else { issue.path.as_str() };
            prop_assert!(resolve(&doc, target).is_some(), "{} not in {}", issue.path, doc);
        }
    }

    #[test]
    fn issues_are_sorted_by_path(r in mutated_resource()) {
        let issues = validate(&r);
        prop_assert!(issues.windows(2).all(|w| w[0].path <= w[1].path));
    }
}
