use super::issue::ValidationIssue;
use super::types::{Bundle, Resource};
use super::validate::reference_issues;

/// Wraps resources, in order, into a `collection` Bundle. The returned issues
/// list dangling references and duplicate keys; the bundle is built either way
/// so callers can report or persist it.
pub fn make_bundle(resources: Vec<Resource>) -> (Bundle, Vec<ValidationIssue>) {
    let bundle = Bundle::collection(resources);
    let issues = reference_issues(&bundle);
    (bundle, issues)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fhir::issue::IssueKind;
    use crate::fhir::types::*;

    fn patient(id: &str) -> Resource {
        Resource::Patient(Patient { id: Some(id.into()), ..Default::default() })
    }

    fn condition(id: &str, subject: &str) -> Resource {
        Resource::Condition(Condition {
            id: Some(id.into()),
            subject: Some(Reference::to(subject)),
            code: Some(CodeableConcept::text("Gastritis")),
            ..Default::default()
        })
    }

    #[test]
    fn empty_input_gives_empty_collection() {
        let (b, issues) = make_bundle(Vec::new());
        assert_eq!(b.bundle_type.as_deref(), Some("collection"));
        assert!(b.is_empty());
        assert!(issues.is_empty());
    }

    #[test]
    fn resolves_within_set() {
        let (b, issues) = make_bundle(vec![patient("p1"), condition("c1", "Patient/p1")]);
        assert_eq!(b.len(), 2);
        assert!(issues.is_empty());
        assert_eq!(b.entry[0].resource.resource_type(), "Patient");
    }

    #[test]
    fn dangling_reference_named() {
        let (_, issues) = make_bundle(vec![condition("c1", "Patient/p9")]);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].kind, IssueKind::DanglingReference);
        assert!(issues[0].message.contains("Patient/p9"));
    }
}
