//! proptest strategies producing resources that pass `validate` with zero
//! errors, and bundles whose references all resolve.

use proptest::collection::vec;
use proptest::option;
use proptest::prelude::*;

use super::types::*;
use super::validate::{
    CLINICAL_STATUS_CODES, CONDITION_CLINICAL_SYSTEM, CONDITION_VERIFICATION_SYSTEM, GENDER_CODES,
    MEDICATION_STATUS_CODES, NAME_USE_CODES, PERIOD_UNIT_CODES, VERIFICATION_STATUS_CODES,
};

const SNOMED: &str = "http://snomed.info/sct";

fn pick(options: &'static [&'static str]) -> impl Strategy<Value = String> {
    proptest::sample::select(options).prop_map(str::to_owned)
}

pub fn text() -> impl Strategy<Value = String> {
    "[A-Za-zÄÖÜäöüß][A-Za-z0-9ÄÖÜäöüß .,()/-]{0,16}"
}

pub fn id() -> impl Strategy<Value = String> {
    "[a-z0-9][a-z0-9.-]{0,10}"
}

pub fn date() -> impl Strategy<Value = String> {
    prop_oneof![
        (1900u32..2030).prop_map(|y| format!("{y:04}")),
        (1900u32..2030, 1u32..=12).prop_map(|(y, m)| format!("{y:04}-{m:02}")),
        (1900u32..2030, 1u32..=12, 1u32..=28).prop_map(|(y, m, d)| format!("{y:04}-{m:02}-{d:02}")),
    ]
}

pub fn date_time() -> impl Strategy<Value = String> {
    prop_oneof![
        date(),
        (1900u32..2030, 1u32..=12, 1u32..=28, 0u32..24, 0u32..60, prop_oneof![Just("Z"), Just("+02:00")])
            .prop_map(|(y, mo, d, h, mi, tz)| format!("{y:04}-{mo:02}-{d:02}T{h:02}:{mi:02}:00{tz}")),
    ]
}

fn decimal() -> impl Strategy<Value = f64> {
    prop_oneof![(0u32..10_000).prop_map(|n| f64::from(n) / 4.0), -1.0e6f64..1.0e6,]
}

pub fn coding() -> impl Strategy<Value = Coding> {
    ("[0-9]{6,9}", option::of(text())).prop_map(|(code, display)| Coding {
        system: Some(SNOMED.to_owned()),
        code: Some(code),
        display,
    })
}

pub fn codeable_concept() -> impl Strategy<Value = CodeableConcept> {
    prop_oneof![
        (vec(coding(), 1..3), option::of(text())).prop_map(|(coding, text)| CodeableConcept { coding, text }),
        text().prop_map(CodeableConcept::text),
    ]
}

fn bound_concept(system: &'static str, codes: &'static [&'static str]) -> impl Strategy<Value = CodeableConcept> {
    (pick(codes), option::of(text())).prop_map(move |(code, display)| CodeableConcept {
        coding: vec![Coding { system: Some(system.to_owned()), code: Some(code), display }],
        text: None,
    })
}

fn human_name() -> impl Strategy<Value = HumanName> {
    (option::of(pick(&NAME_USE_CODES)), option::of(text()), vec(text(), 0..3))
        .prop_filter("name needs a part", |(_, f, g)| f.is_some() || !g.is_empty())
        .prop_map(|(name_use, family, given)| HumanName { name_use, family, given })
}

fn address() -> impl Strategy<Value = Address> {
    (vec(text(), 0..2), option::of(text()), option::of("[0-9]{5}"), option::of(text()))
        .prop_map(|(line, city, postal_code, country)| Address { line, city, postal_code, country })
}

fn quantity() -> impl Strategy<Value = Quantity> {
    (decimal(), text(), option::of(Just("http://unitsofmeasure.org".to_owned()))).prop_flat_map(
        |(value, unit, system)| {
            let code = if system.is_some() { option::of(Just("mg".to_owned())).boxed() } else { Just(None).boxed() };
            code.prop_map(move |code| Quantity {
                value: Some(value),
                unit: Some(unit.clone()),
                system: system.clone(),
                code,
            })
        },
    )
}

fn dose_and_rate() -> impl Strategy<Value = DoseAndRate> {
    (option::of(codeable_concept()), option::of(quantity()))
        .prop_filter("doseAndRate needs content", |(t, q)| t.is_some() || q.is_some())
        .prop_map(|(dose_type, dose_quantity)| DoseAndRate { dose_type, dose_quantity })
}

fn timing() -> impl Strategy<Value = Timing> {
    let repeat =
        (option::of(1u32..6), option::of((1u32..30).prop_map(f64::from)), option::of(pick(&PERIOD_UNIT_CODES)))
            .prop_map(|(frequency, period, period_unit)| TimingRepeat { frequency, period, period_unit });
    (option::of(codeable_concept()), option::of(repeat))
        .prop_filter("timing needs content", |(c, r)| c.is_some() || r.is_some())
        .prop_map(|(code, repeat)| Timing { code, repeat })
}

fn dosage() -> impl Strategy<Value = Dosage> {
    (option::of(text()), vec(dose_and_rate(), 0..2), option::of(timing()))
        .prop_map(|(text, dose_and_rate, timing)| Dosage { text, dose_and_rate, timing })
}

pub fn patient() -> impl Strategy<Value = Patient> {
    (id(), vec(human_name(), 0..2), option::of(date()), option::of(pick(&GENDER_CODES)), vec(address(), 0..2))
        .prop_map(|(id, name, birth_date, gender, address)| Patient { id: Some(id), name, birth_date, gender, address })
}

pub fn condition(subject: String) -> impl Strategy<Value = Condition> {
    (
        id(),
        option::of(codeable_concept()),
        option::of(bound_concept(CONDITION_CLINICAL_SYSTEM, &CLINICAL_STATUS_CODES)),
        option::of(bound_concept(CONDITION_VERIFICATION_SYSTEM, &VERIFICATION_STATUS_CODES)),
        option::of(codeable_concept()),
        vec(codeable_concept(), 0..2),
        vec(codeable_concept(), 0..2),
        option::of(date_time()),
    )
        .prop_map(move |(id, code, clinical_status, verification_status, severity, body_site, category, onset)| {
            Condition {
                id: Some(id),
                subject: Some(Reference::to(subject.clone())),
                code,
                clinical_status,
                verification_status,
                severity,
                body_site,
                category,
                onset_date_time: onset,
            }
        })
}

pub fn medication_statement(subject: String) -> impl Strategy<Value = MedicationStatement> {
    (id(), pick(&MEDICATION_STATUS_CODES), codeable_concept(), vec(dosage(), 0..2)).prop_map(
        move |(id, status, medication, dosage)| MedicationStatement {
            id: Some(id),
            subject: Some(Reference::to(subject.clone())),
            status: Some(status),
            medication_codeable_concept: Some(medication),
            dosage,
        },
    )
}

/// Any single valid resource. Subjects point at `Patient/p1`; that is only
/// resolvable inside a bundle, which `validate` does not require.
pub fn resource() -> impl Strategy<Value = Resource> {
    prop_oneof![
        patient().prop_map(Resource::Patient),
        condition("Patient/p1".to_owned()).prop_map(Resource::Condition),
        medication_statement("Patient/p1".to_owned()).prop_map(Resource::MedicationStatement),
    ]
}

/// A valid collection bundle: one patient, then conditions and medication
/// statements referencing it. Ids are rewritten to be unique per type.
pub fn bundle() -> impl Strategy<Value = Bundle> {
    patient().prop_flat_map(|p| {
        let pid = p.id.clone().unwrap_or_default();
        let subject = format!("Patient/{pid}");
        (Just(p), vec(condition(subject.clone()), 0..4), vec(medication_statement(subject), 0..3)).prop_map(
            |(p, conditions, meds)| {
                let mut resources = vec![Resource::Patient(p)];
                resources.extend(conditions.into_iter().enumerate().map(|(i, mut c)| {
                    c.id = Some(format!("condition-{}", i + 1));
                    Resource::Condition(c)
                }));
                resources.extend(meds.into_iter().enumerate().map(|(i, mut m)| {
                    m.id = Some(format!("medicationstatement-{}", i + 1));
                    Resource::MedicationStatement(m)
                }));
                Bundle::collection(resources)
            },
        )
    })
}
