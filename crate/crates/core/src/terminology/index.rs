//! Local lexical concept index.
//!
//! Score = 0.7 * query-token coverage + 0.2 * character-trigram Dice
//! + 0.1 * prefix bonus, all over lowercased, diacritic-folded text.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use super::{ConceptMatch, TermQuery, TerminologyError};

/// Lowercases, strips diacritics, expands `ß`, and collapses every run of
/// non-alphanumerics into one space.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.nfd().filter(|c| !is_combining_mark(*c)) {
        if c.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            for l in c.to_lowercase() {
                if l == 'ß' {
                    out.push_str("ss");
                } else {
                    out.push(l);
                }
            }
        } else {
            pending_space = true;
        }
    }
    out
}

pub fn tokens(normalized: &str) -> BTreeSet<&str> {
    normalized.split(' ').filter(|t| !t.is_empty()).collect()
}

/// Bag of character trigrams over the string padded with two leading and one
/// trailing space.
pub fn trigrams(normalized: &str) -> HashMap<[char; 3], u32> {
    let padded: Vec<char> = "  ".chars().chain(normalized.chars()).chain(" ".chars()).collect();
    let mut bag = HashMap::new();
    for w in padded.windows(3) {
        *bag.entry([w[0], w[1], w[2]]).or_insert(0) += 1;
    }
    bag
}

fn bag_size(bag: &HashMap<[char; 3], u32>) -> u32 {
    bag.values().sum()
}

/// Multiset Dice coefficient.
pub fn dice(a: &HashMap<[char; 3], u32>, b: &HashMap<[char; 3], u32>) -> f64 {
    let total = bag_size(a) + bag_size(b);
    if total == 0 {
        return 0.0;
    }
    let shared: u32 = a.iter().map(|(g, n)| (*n).min(b.get(g).copied().unwrap_or(0))).sum();
    f64::from(2 * shared) / f64::from(total)
}

/// Lexical score of `display` against `query`, in [0, 1]. An exact
/// (normalized) match scores exactly 1.0.
pub fn score(query: &str, display: &str) -> f64 {
    let q = normalize(query);
    let d = normalize(display);
    score_prepared(&Prepared::new(&q), &Prepared::new(&d))
}

struct Prepared<'a> {
    text: &'a str,
    tokens: BTreeSet<&'a str>,
    trigrams: HashMap<[char; 3], u32>,
}

impl<'a> Prepared<'a> {
    fn new(text: &'a str) -> Self {
        Self { text, tokens: tokens(text), trigrams: trigrams(text) }
    }
}

fn score_prepared(q: &Prepared<'_>, d: &Prepared<'_>) -> f64 {
    if q.tokens.is_empty() {
        return 0.0;
    }
    let covered = q.tokens.iter().filter(|t| d.tokens.contains(*t)).count();
    let coverage = covered as f64 / q.tokens.len() as f64;
    let prefix = if d.text.starts_with(q.text) { 1.0 } else { 0.0 };
    // Integer weights keep an exact match at exactly 1.0.
    ((7.0 * coverage + 2.0 * dice(&q.trigrams, &d.trigrams) + prefix) / 10.0).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Concept {
    pub system: String,
    pub code: String,
    pub display: String,
}

/// Orders matches by non-increasing score, then ascending code.
pub fn rank(matches: &mut [ConceptMatch]) {
    matches.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.code.cmp(&b.code)));
}

#[derive(Debug, Clone, Default)]
pub struct ConceptIndex {
    concepts: Vec<Concept>,
    normalized: Vec<String>,
    postings: HashMap<[char; 3], Vec<usize>>,
}

impl ConceptIndex {
    pub fn new(concepts: Vec<Concept>) -> Self {
        let normalized: Vec<String> = concepts.iter().map(|c| normalize(&c.display)).collect();
        let mut postings: HashMap<[char; 3], Vec<usize>> = HashMap::new();
        for (i, n) in normalized.iter().enumerate() {
            for g in trigrams(n).into_keys() {
                postings.entry(g).or_default().push(i);
            }
        }
        Self { concepts, normalized, postings }
    }

    /// Parses the `system<TAB>code<TAB>display` snapshot format.
    pub fn from_tsv(text: &str) -> Result<Self, TerminologyError> {
        let mut concepts = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.splitn(3, '\t');
            match (cols.next(), cols.next(), cols.next()) {
                (Some(system), Some(code), Some(display))
                    if !system.is_empty() && !code.is_empty() && !display.is_empty() =>
                {
                    concepts.push(Concept {
                        system: system.to_owned(),
                        code: code.to_owned(),
                        display: display.to_owned(),
                    })
                }
                _ => {
                    return Err(TerminologyError::Snapshot {
                        line: lineno + 1,
                        message: "expected `system<TAB>code<TAB>display`".into(),
                    })
                }
            }
        }
        Ok(Self::new(concepts))
    }

    pub fn load(path: &Path) -> Result<Self, TerminologyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TerminologyError::Snapshot { line: 0, message: format!("{}: {e}", path.display()) })?;
        Self::from_tsv(&text)
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    /// Top `query.limit` concepts with a positive score. Only concepts sharing
    /// at least one trigram with the query are scored; every other concept
    /// scores zero by construction.
    pub fn search(&self, query: &TermQuery) -> Vec<ConceptMatch> {
        let q_norm = normalize(&query.text);
        let q = Prepared::new(&q_norm);
        let mut candidates: Vec<usize> =
            q.trigrams.keys().filter_map(|g| self.postings.get(g)).flatten().copied().collect();
        candidates.sort_unstable();
        candidates.dedup();

        let mut matches: Vec<ConceptMatch> = candidates
            .into_iter()
            .filter_map(|i| {
                let s = score_prepared(&q, &Prepared::new(&self.normalized[i]));
                (s > 0.0).then(|| {
                    let c = &self.concepts[i];
                    ConceptMatch {
                        system: c.system.clone(),
                        code: c.code.clone(),
                        display: c.display.clone(),
                        score: s,
                    }
                })
            })
            .collect();
        rank(&mut matches);
        matches.truncate(query.limit);
        matches
    }
}
