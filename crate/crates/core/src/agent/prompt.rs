use std::fmt::Write;

use crate::fhir::SUPPORTED_TYPES;

use super::AgentConfig;

/// Rough token count used for prompt budgeting: one token per four chars.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

struct Example {
    resource_type: &'static str,
    note: &'static str,
    block: &'static str,
}

// Ids are omitted on purpose: the runtime assigns them.
const EXAMPLES: &[Example] = &[
    Example {
        resource_type: "Patient",
        note: "the patient named in the letter header",
        block: r#"<<<action {"action":"add_resource","resource":{"resourceType":"Patient","name":[{"use":"official","family":"Weber","given":["Anna"]}],"gender":"female","birthDate":"1961-07-02"}} >>>"#,
    },
    Example {
        resource_type: "Condition",
        note: "a finding coded after searching the condition and severity value sets",
        block: r#"<<<action {"action":"add_resource","resource":{"resourceType":"Condition","subject":{"reference":"Patient/patient-1"},"code":{"coding":[{"system":"http://snomed.info/sct","code":"25064002","display":"Headache"}],"text":"Kopfschmerzen"},"clinicalStatus":{"coding":[{"system":"http://terminology.hl7.org/CodeSystem/condition-clinical","code":"active"}]},"severity":{"coding":[{"system":"http://snomed.info/sct","code":"6736007","display":"Moderate"}]}}} >>>"#,
    },
    Example {
        resource_type: "MedicationStatement",
        note: "a drug taken twice daily",
        block: r#"<<<action {"action":"add_resource","resource":{"resourceType":"MedicationStatement","status":"active","subject":{"reference":"Patient/patient-1"},"medicationCodeableConcept":{"coding":[{"system":"http://snomed.info/sct","code":"387207008","display":"Ibuprofen"}]},"dosage":[{"text":"400 mg zweimal täglich","timing":{"repeat":{"frequency":2,"period":1,"periodUnit":"d"}}}]}} >>>"#,
    },
    Example {
        resource_type: "Patient",
        note: "correcting resource #1 after feedback",
        block: r#"<<<action {"action":"add_resource","replace":1,"resource":{"resourceType":"Patient","name":[{"family":"Weber","given":["Anna","Maria"]}],"gender":"female"}} >>>"#,
    },
    Example {
        resource_type: "Condition",
        note: "a resolved problem mentioned in the history, known only as text",
        block: r#"<<<action {"action":"add_resource","resource":{"resourceType":"Condition","subject":{"reference":"Patient/patient-1"},"code":{"text":"Appendektomie 1990"},"clinicalStatus":{"coding":[{"system":"http://terminology.hl7.org/CodeSystem/condition-clinical","code":"resolved"}]}}} >>>"#,
    },
    Example {
        resource_type: "MedicationStatement",
        note: "a drug the patient stopped taking",
        block: r#"<<<action {"action":"add_resource","resource":{"resourceType":"MedicationStatement","status":"stopped","subject":{"reference":"Patient/patient-1"},"medicationCodeableConcept":{"text":"Metamizol"}}} >>>"#,
    },
];

pub fn build_system_prompt(config: &AgentConfig) -> String {
    let mut p = String::new();
    let lang = config.language.as_deref().map(|l| format!(" (language: {l})")).unwrap_or_default();

    let _ = writeln!(
        p,
        "You convert a clinical letter{lang} into FHIR R4 resources. Work step by step. In every reply, \
         write a short thought, then exactly one action block of the form\n<<<action {{\"action\": ...}} >>>\n\
         After each action you receive an Observation with its result."
    );

    p.push_str("\n## Resource types\nYou may create only these resource types:\n");
    for t in &config.resource_types {
        let _ = writeln!(p, "- {t}");
    }

    p.push_str("\n## Value sets\nCoded fields must use codes returned by the search tool for these value sets:\n");
    // Value sets documented as serving a disabled type are left out.
    let disabled: Vec<&str> = SUPPORTED_TYPES.iter().copied().filter(|t| !config.allows(t)).collect();
    for vs in &config.valuesets {
        if disabled.iter().any(|t| vs.description.starts_with(&format!("{t}."))) {
            continue;
        }
        let _ = writeln!(p, "- {} ({}): {}", vs.name, vs.url, vs.description);
    }

    p.push_str(
        "\n## Actions\n\
         - search: {\"action\":\"search\",\"text\":<term>,\"valueset\":<name>} lists matching codes as `code | display | score` lines.\n\
         - add_resource: {\"action\":\"add_resource\",\"resource\":<FHIR JSON>} validates and stores one resource. \
         Ids are assigned for you: the n-th stored resource of type T gets id `<t>-<n>` in lower case, where n counts all stored resources.\n\
         - final_answer: {\"action\":\"final_answer\"} wraps every stored resource into one collection Bundle and ends the task.\n",
    );

    p.push_str("\n## Examples\n");
    let examples = EXAMPLES.iter().filter(|e| config.allows(e.resource_type)).take(2);
    for (i, e) in examples.enumerate() {
        let _ = writeln!(p, "Example {} ({}):\n{}", i + 1, e.note, e.block);
    }

    p.push_str(
        "\n## Rules\n\
         - Search before you put any code into a resource. Never invent codes, systems or displays.\n\
         - If no code fits, use a CodeableConcept with text only.\n\
         - Reference the patient as {\"reference\":\"Patient/<id>\"} using the id reported when it was added.\n\
         - If a resource is rejected, read the listed issues and send a corrected add_resource.\n\
         - To supersede an earlier resource, add `\"replace\": <ordinal>` with the number reported when it was added, so the Bundle holds no duplicates.\n\
         - Put everything into one Bundle by calling final_answer once all facts are stored.\n",
    );
    for t in disabled {
        let _ = writeln!(p, "- Do not emit {t} resources; they are disabled for this run.");
    }
    p
}
