use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use fhirforge_client::Client;
use fhirforge_core::agent::{AgentStatus, SessionTrace};
use fhirforge_core::api::TranslateRequest;
use fhirforge_core::eval::{aggregate, render_matrix, AnnotationSet, Cruciality, Judgment, Tag};
use fhirforge_core::fhir::{
    parse_resource, reference_issues, serialize, sha256_hex, strategies, validate, validate_bundle, IssueKind,
    ValidationIssue, CLINICAL_STATUS_CODES,
};
use fhirforge_core::llm::ProviderConfig;
use fhirforge_core::pipeline::{self, RunConfig, BUNDLE_FILE, TRACE_FILE};
use fhirforge_core::terminology::{default_valuesets, Concept, ConceptIndex, ConceptMatch, TermQuery, MAX_LIMIT};
use fhirforge_service::{serve, ServiceConfig};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::json;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

const SNOMED: &str = "http://snomed.info/sct";

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn script(name: &str) -> PathBuf {
    fixtures().join("scripts").join(format!("{name}.json"))
}

fn letter_path() -> PathBuf {
    fixtures().join("letter.txt")
}

fn letter() -> String {
    std::fs::read_to_string(letter_path()).unwrap()
}

fn scripted(name: &str) -> RunConfig {
    RunConfig::new(ProviderConfig::Scripted { script: script(name) })
}

async fn cli(args: &[&str]) -> u8 {
    fhirforge_cli::run_from(std::iter::once("fhirforge").chain(args.iter().copied())).await
}

fn issues_for(text: &str) -> Vec<ValidationIssue> {
    match parse_resource(text) {
        Ok(parsed) => parsed.warnings.into_iter().chain(validate(&parsed.value)).collect(),
        Err(e) => e.issues(),
    }
}

fn condition_with_status(code: &str) -> String {
    json!({
        "resourceType": "Condition",
        "id": "c1",
        "subject": {"reference": "Patient/p1"},
        "code": {"text": "headache"},
        "clinicalStatus": {"coding": [{
            "system": "http://terminology.hl7.org/CodeSystem/condition-clinical",
            "code": code
        }]}
    })
    .to_string()
}

#[test]
fn criterion_1_binding_validation() {
    let started = Instant::now();
    let legal = ["active", "recurrence", "relapse", "inactive", "remission", "resolved"];
    assert_eq!(CLINICAL_STATUS_CODES.iter().collect::<BTreeSet<_>>(), legal.iter().collect::<BTreeSet<_>>());
    for code in legal {
        let issues = issues_for(&condition_with_status(code));
        assert!(issues.is_empty(), "{code}: {issues:?}");
    }

    let mut rng = StdRng::seed_from_u64(0x5eed_0001);
    let alphabet: Vec<char> = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-".chars().collect();
    let mut tokens = BTreeSet::new();
    while tokens.len() < 20 {
        let token: String = if rng.random_bool(0.25) {
            // Near misses: a legal code with one character changed.
            let mut chars: Vec<char> = legal[rng.random_range(0..legal.len())].chars().collect();
            let at = rng.random_range(0..chars.len());
            chars[at] = alphabet[rng.random_range(0..alphabet.len())];
            chars.into_iter().collect()
        } else {
            let len = rng.random_range(1..=16);
            (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
        };
        if !legal.contains(&token.as_str()) {
            tokens.insert(token);
        }
    }
    for token in &tokens {
        let issues = issues_for(&condition_with_status(token));
        let bad: Vec<_> = issues.iter().filter(|i| i.kind == IssueKind::BadBinding).collect();
        assert_eq!(bad.len(), 1, "{token}: {issues:?}");
        assert_eq!(issues.iter().filter(|i| i.is_error()).count(), 1, "{token}: {issues:?}");
        assert!(bad[0].path.contains("clinicalStatus"), "{}", bad[0]);
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
}

#[test]
fn criterion_2_round_trip() {
    let started = Instant::now();
    let mut runner = TestRunner::new_with_rng(Config::default(), TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let strategy = strategies::resource();
    let mut failures = Vec::new();
    for _ in 0..1000 {
        let resource = strategy.new_tree(&mut runner).unwrap().current();
        assert!(validate(&resource).iter().all(|i| !i.is_error()), "generator produced an invalid resource");
        let text = serialize(&resource).unwrap();
        match parse_resource(&text) {
            Ok(parsed) if parsed.value == resource => {}
            other => failures.push((text, format!("{other:?}"))),
        }
    }
    assert!(failures.is_empty(), "{} failure(s), first: {:?}", failures.len(), failures.first());
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
}

#[tokio::test]
async fn criterion_3_agent_validity() {
    let mut names: Vec<String> = std::fs::read_dir(fixtures().join("scripts"))
        .unwrap()
        .map(|e| e.unwrap().path().file_stem().unwrap().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert!(names.len() >= 10, "{names:?}");
    for required in ["error_repair", "budget_exhaust", "malformed_action", "tool_failure"] {
        assert!(names.iter().any(|n| n == required), "missing {required}");
    }

    let mut successes = 0;
    for name in &names {
        let outcome = pipeline::translate(&letter(), &scripted(name), &mut |_| {}).await.unwrap();
        if outcome.status != AgentStatus::Success {
            assert!(outcome.bundle.is_none(), "{name}");
            continue;
        }
        successes += 1;
        let bundle = outcome.bundle.as_ref().unwrap();
        let errors: Vec<_> = validate_bundle(bundle).into_iter().filter(|i| i.is_error()).collect();
        assert!(errors.is_empty(), "{name}: {errors:?}");
        let dangling = reference_issues(bundle);
        assert!(dangling.is_empty(), "{name}: {dangling:?}");
    }
    assert!(successes > 0);
}

#[tokio::test]
async fn criterion_4_error_repair() {
    let outcome = pipeline::translate(&letter(), &scripted("error_repair"), &mut |_| {}).await.unwrap();
    assert_eq!(outcome.status, AgentStatus::Success);
    assert_eq!(outcome.trace.steps.len(), 4);
    assert!(outcome.trace.steps[1].observation.contains("bad-binding"), "{}", outcome.trace.steps[1].observation);
}

#[tokio::test]
async fn criterion_5_replay_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let recorded = dir.path().join("recorded");
    let code = cli(&[
        "translate",
        letter_path().to_str().unwrap(),
        "--script",
        script("search_then_code").to_str().unwrap(),
        "--out",
        recorded.to_str().unwrap(),
        "-q",
    ])
    .await;
    assert_eq!(code, 0);
    let bundle = std::fs::read(recorded.join(BUNDLE_FILE)).unwrap();
    let trace_path = recorded.join(TRACE_FILE);

    let rebuilt = dir.path().join("rebuilt.json");
    let code =
        cli(&["replay", trace_path.to_str().unwrap(), "--speed", "0", "--out", rebuilt.to_str().unwrap(), "-q"]).await;
    assert_eq!(code, 0);
    assert_eq!(sha256_hex(std::fs::read(&rebuilt).unwrap()), sha256_hex(&bundle));

    let trace = SessionTrace::read(&trace_path).unwrap();
    let mut rng = StdRng::seed_from_u64(0x5eed_0005);
    for step in 0..trace.steps.len() {
        let mut tampered = trace.clone();
        let observation = &mut tampered.steps[step].observation;
        let positions: Vec<usize> = observation.char_indices().map(|(i, _)| i).collect();
        let at = positions[rng.random_range(0..positions.len())];
        let old = observation[at..].chars().next().unwrap();
        let new = if old == '#' { '%' } else { '#' };
        observation.replace_range(at..at + old.len_utf8(), &new.to_string());
        let path = dir.path().join(format!("tampered-{step}.jsonl"));
        tampered.write(&path).unwrap();
        let code = cli(&["replay", path.to_str().unwrap(), "--speed", "0", "-q"]).await;
        assert_eq!(code, 4, "tampered step {}", step + 1);
    }
}

/// Reference cell counts, rows `=`, `==`, `+`, `-`, `+-`, `X`; columns
/// Worse!, Worse?, Neutral!, Neutral?, Better!, Better?.
const TABLE: [[u64; 6]; 6] = [
    [0, 4, 0, 4, 0, 0],
    [0, 0, 121, 83, 0, 0],
    [0, 10, 0, 23, 13, 67],
    [6, 15, 0, 67, 0, 0],
    [0, 10, 0, 12, 5, 1],
    [1, 9, 0, 0, 0, 0],
];

#[test]
fn criterion_6_table_reconstruction() {
    let set = AnnotationSet::load(&fixtures().join("reference-matrix.annotations.jsonl")).unwrap();
    let m = aggregate(&set).unwrap();
    for (row, tag) in Tag::ALL.iter().enumerate() {
        for (j, judgment) in Judgment::ALL.iter().enumerate() {
            for (c, cru) in Cruciality::ALL.iter().enumerate() {
                assert_eq!(m.get(*tag, *cru, *judgment), TABLE[row][2 * j + c], "{tag:?} {cru:?} {judgment:?}");
            }
        }
    }
    let rendered = render_matrix(&m);
    let row: Vec<u64> = rendered
        .lines()
        .find(|l| l.split_whitespace().next() == Some("=="))
        .unwrap()
        .split('|')
        .skip(1)
        .flat_map(|c| c.split_whitespace().map(|n| n.parse::<u64>().unwrap()))
        .collect();
    assert_eq!(row, vec![0, 0, 121, 83, 0, 0]);
    assert_eq!(m.hallucinations(), 10);

    let totals = (m.total(Judgment::Worse), m.total(Judgment::Neutral), m.total(Judgment::Better));
    assert_eq!(totals, (46, 314, 86), "totals Worse/Neutral/Better");
    assert_eq!(m.grand_total(), 446);
    assert_eq!(format!("{:.3}%", 100.0 * m.hallucination_rate()), "2.242%");
}

// Independent scoring oracle: recomputes the documented lexical score for
// every concept, with no index and no shared helpers.
fn oracle_normalize(text: &str) -> String {
    let folded: String = text
        .nfd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .map(|c| if c == 'ß' { "ss".to_owned() } else { c.to_string() })
        .collect();
    folded.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).collect::<Vec<_>>().join(" ")
}

fn oracle_trigrams(text: &str) -> HashMap<String, u32> {
    let padded: Vec<char> = format!("  {text} ").chars().collect();
    let mut bag = HashMap::new();
    for w in padded.windows(3) {
        *bag.entry(w.iter().collect()).or_insert(0) += 1;
    }
    bag
}

fn oracle_score(query: &str, display: &str) -> f64 {
    let (q, d) = (oracle_normalize(query), oracle_normalize(display));
    let q_tokens: BTreeSet<&str> = q.split(' ').filter(|t| !t.is_empty()).collect();
    if q_tokens.is_empty() {
        return 0.0;
    }
    let d_tokens: BTreeSet<&str> = d.split(' ').filter(|t| !t.is_empty()).collect();
    let coverage = q_tokens.intersection(&d_tokens).count() as f64 / q_tokens.len() as f64;
    let (qg, dg) = (oracle_trigrams(&q), oracle_trigrams(&d));
    let total: u32 = qg.values().sum::<u32>() + dg.values().sum::<u32>();
    let shared: u32 = qg.iter().map(|(g, n)| (*n).min(dg.get(g).copied().unwrap_or(0))).sum();
    let dice = if total == 0 { 0.0 } else { f64::from(2 * shared) / f64::from(total) };
    let prefix = if d.starts_with(&q) { 1.0 } else { 0.0 };
    ((7.0 * coverage + 2.0 * dice + prefix) / 10.0).clamp(0.0, 1.0)
}

fn oracle_search(concepts: &[Concept], query: &str, limit: usize) -> Vec<(String, f64)> {
    let mut scored: Vec<(String, f64)> =
        concepts.iter().map(|c| (c.code.clone(), oracle_score(query, &c.display))).filter(|(_, s)| *s > 0.0).collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.truncate(limit);
    scored
}

fn target_concepts() -> Vec<Concept> {
    let c = |system: &str, code: &str, display: &str| Concept {
        system: system.into(),
        code: code.into(),
        display: display.into(),
    };
    vec![
        c(SNOMED, "52795006", "Forehead structure"),
        c(SNOMED, "255604002", "Mild"),
        c(SNOMED, "422400008", "Vomiting"),
        c(SNOMED, "422587007", "Nausea (finding)"),
        c("http://terminology.hl7.org/CodeSystem/dose-rate-type", "ordered", "Ordered"),
        c("http://terminology.hl7.org/CodeSystem/condition-category", "symptom", "Symptom"),
    ]
}

const DISTRACTORS: [&str; 50] = [
    "Moderate",
    "Severe",
    "Mild to moderate",
    "Moderate to severe",
    "Fatal",
    "Nausea and vomiting",
    "Vomiting of pregnancy",
    "Projectile vomiting",
    "Cyclical vomiting syndrome",
    "Retching",
    "Headache",
    "Tension-type headache",
    "Migraine",
    "Fever",
    "Chest pain",
    "Structure of head",
    "Scalp structure",
    "Temple region structure",
    "Face structure",
    "Eyebrow structure",
    "Skin structure of forehead",
    "Frontal bone structure",
    "Structure of left hand",
    "Structure of right hand",
    "Lung structure",
    "Essential hypertension",
    "Diabetes mellitus type 2",
    "Pneumonia",
    "Asthma",
    "Atrial fibrillation",
    "Abdominal pain",
    "Diarrhea",
    "Constipation",
    "Dizziness",
    "Fatigue",
    "Mildly elevated",
    "Milder",
    "Vomitus",
    "Foreign body",
    "Head injury",
    "Fracture of radius",
    "Fracture of left femur",
    "Übelkeit",
    "Kopfschmerz",
    "Schwindel",
    "Problem list item",
    "Encounter diagnosis",
    "Finding of head region",
    "Disorder of skin",
    "Ordered dose",
];

fn snapshot_index() -> Vec<Concept> {
    let mut concepts = target_concepts();
    concepts.extend(DISTRACTORS.iter().enumerate().map(|(i, d)| Concept {
        system: SNOMED.into(),
        code: format!("{}", 900_000_000 + 17 * i),
        display: (*d).into(),
    }));
    concepts
}

fn query(text: &str, limit: usize) -> TermQuery {
    TermQuery::new(text, default_valuesets()[0].clone(), limit).unwrap()
}

fn ranking(hits: &[ConceptMatch]) -> Vec<(String, f64)> {
    hits.iter().map(|m| (m.code.clone(), m.score)).collect()
}

#[test]
fn criterion_7_terminology_ranking() {
    let concepts = snapshot_index();
    let index = ConceptIndex::new(concepts.clone());
    for (text, code) in [("mild", "255604002"), ("vomiting", "422400008"), ("forehead", "52795006")] {
        let hits = index.search(&query(text, 10));
        assert_eq!(hits.first().map(|m| m.code.as_str()), Some(code), "{text}: {hits:?}");
    }

    let words: Vec<String> = concepts
        .iter()
        .flat_map(|c| oracle_normalize(&c.display).split(' ').map(str::to_owned).collect::<Vec<_>>())
        .collect();
    let mut rng = StdRng::seed_from_u64(0x5eed_0007);
    for case in 0..200 {
        let mut subset: Vec<Concept> = concepts.iter().filter(|_| rng.random_bool(0.6)).cloned().collect();
        if subset.is_empty() {
            subset.push(concepts[case % concepts.len()].clone());
        }
        let n = rng.random_range(1..=3);
        let mut text: Vec<String> = (0..n).map(|_| words[rng.random_range(0..words.len())].clone()).collect();
        if rng.random_bool(0.3) {
            // Truncate one word to exercise partial trigram overlap.
            let w = &mut text[0];
            let keep = rng.random_range(1..=w.chars().count());
            *w = w.chars().take(keep).collect();
        }
        if rng.random_bool(0.2) {
            text[0] = text[0].to_uppercase();
        }
        let text = text.join(" ");
        let idx = ConceptIndex::new(subset.clone());
        let got = ranking(&idx.search(&query(&text, MAX_LIMIT)));
        let want = oracle_search(&subset, &text, MAX_LIMIT);
        assert_eq!(got.len(), want.len(), "case {case} `{text}`: {got:?} vs {want:?}");
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(g.0, w.0, "case {case} `{text}`: {got:?} vs {want:?}");
            assert!((g.1 - w.1).abs() < 1e-12, "case {case} `{text}`: {g:?} vs {w:?}");
        }
    }
}

#[tokio::test]
async fn criterion_8_service_cli_parity() {
    let fixture = "search_then_code";
    let dir = tempfile::tempdir().unwrap();
    let local = dir.path().join("local");
    let code = cli(&[
        "translate",
        letter_path().to_str().unwrap(),
        "--script",
        script(fixture).to_str().unwrap(),
        "--out",
        local.to_str().unwrap(),
        "-q",
    ])
    .await;
    assert_eq!(code, 0);
    let cli_bundle = std::fs::read(local.join(BUNDLE_FILE)).unwrap();

    let runs = dir.path().join("runs");
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(serve(listener, ServiceConfig::new(scripted(fixture), &runs)));
    let client = Client::new(&base);
    let request = TranslateRequest { text: letter(), document_id: Some("letter".into()), config: None };
    let run_id = client.translate(&request).await.unwrap().run_id;
    let view = client.wait(&run_id, Duration::from_millis(20), Duration::from_secs(30)).await.unwrap();
    assert_eq!(view.status, Some(AgentStatus::Success));
    let service_bundle = std::fs::read(runs.join(&run_id).join(BUNDLE_FILE)).unwrap();
    assert_eq!(sha256_hex(&service_bundle), sha256_hex(&cli_bundle));
    assert_eq!(service_bundle, cli_bundle);

    // The CLI in client mode lands on the same bytes too.
    let remote = dir.path().join("remote");
    let code = cli(&[
        "translate",
        letter_path().to_str().unwrap(),
        "--server",
        &base,
        "--out",
        remote.to_str().unwrap(),
        "-q",
    ])
    .await;
    assert_eq!(code, 0);
    assert_eq!(std::fs::read(remote.join(BUNDLE_FILE)).unwrap(), cli_bundle);
}
