use std::fmt::Write;

use serde::Serialize;

use super::{AnnotationError, AnnotationSet, Cruciality, Judgment, Tag};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct EvalMatrix {
    /// `cells[tag][cruciality][judgment]`, indexed by each enum's `ALL` order.
    cells: [[[u64; 3]; 2]; 6],
}

impl EvalMatrix {
    pub fn add(&mut self, tag: Tag, cruciality: Cruciality, judgment: Judgment) {
        self.cells[tag.index()][cruciality.index()][judgment.index()] += 1;
    }

    pub fn get(&self, tag: Tag, cruciality: Cruciality, judgment: Judgment) -> u64 {
        self.cells[tag.index()][cruciality.index()][judgment.index()]
    }

    /// Column sum over all tags and both cruciality levels.
    pub fn total(&self, judgment: Judgment) -> u64 {
        self.cells.iter().flatten().map(|c| c[judgment.index()]).sum()
    }

    pub fn grand_total(&self) -> u64 {
        Judgment::ALL.iter().map(|j| self.total(*j)).sum()
    }

    pub fn tag_count(&self, tag: Tag) -> u64 {
        self.cells[tag.index()].iter().flatten().sum()
    }

    pub fn hallucinations(&self) -> u64 {
        self.tag_count(Tag::Hallucination)
    }

    /// Share of items tagged `X`; 0 for an empty matrix.
    pub fn hallucination_rate(&self) -> f64 {
        match self.grand_total() {
            0 => 0.0,
            n => self.hallucinations() as f64 / n as f64,
        }
    }
}

pub fn aggregate(set: &AnnotationSet) -> Result<EvalMatrix, AnnotationError> {
    let mut m = EvalMatrix::default();
    for (i, item) in set.items.iter().enumerate() {
        let line = i + 2;
        item.check().map_err(|message| AnnotationError { line, message })?;
        let cruciality = set.cruciality_of(item).ok_or_else(|| AnnotationError {
            line,
            message: format!("no cruciality for {} and no default for object {}", item.path(), item.object),
        })?;
        m.add(item.tag, cruciality, item.judgment());
    }
    Ok(m)
}

const DESCRIPTIONS: [&str; 6] = [
    "(semantically related)",
    "(completely identical)",
    "(lacking in HB)",
    "(lacking in PD)",
    "(value difference)",
    "(semantic hallucination or invalid)",
];

/// Fixed-width rendering: one row per tag, columns judgment x cruciality.
pub fn render_matrix(m: &EvalMatrix) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<4} {:<36}|{:^13}|{:^13}|{:^13}", "Sign", "Description", "Worse", "Neutral", "Better");
    let _ = write!(out, "{:<4} {:<36}", "", "(cruciality)");
    for _ in Judgment::ALL {
        let _ = write!(out, "|{:>6}{:>6} ", "!", "?");
    }
    out.push('\n');
    let _ = writeln!(out, "{}", "-".repeat(4 + 1 + 36 + 3 * 14));
    for tag in Tag::ALL {
        let _ = write!(out, "{:<4} {:<36}", tag.sigil(), DESCRIPTIONS[tag.index()]);
        for j in Judgment::ALL {
            let _ = write!(out, "|{:>6}{:>6} ", m.get(tag, Cruciality::Crucial, j), m.get(tag, Cruciality::Minor, j));
        }
        out.push('\n');
    }
    let _ = writeln!(out, "{}", "-".repeat(4 + 1 + 36 + 3 * 14));
    let _ = write!(out, "{:<41}", "total");
    for j in Judgment::ALL {
        let _ = write!(out, "|{:^13}", m.total(j));
    }
    out.push('\n');
    let _ = writeln!(
        out,
        "hallucination rate: {}/{} = {:.3}%",
        m.hallucinations(),
        m.grand_total(),
        100.0 * m.hallucination_rate()
    );
    out
}

/// `tag,cruciality,judgment,count`, one row per cell.
pub fn matrix_csv(m: &EvalMatrix) -> String {
    let mut out = String::from("tag,cruciality,judgment,count\n");
    for tag in Tag::ALL {
        for c in Cruciality::ALL {
            for j in Judgment::ALL {
                let _ = writeln!(out, "{},{},{},{}", tag.sigil(), c.sigil(), j.as_str(), m.get(tag, c, j));
            }
        }
    }
    out
}
