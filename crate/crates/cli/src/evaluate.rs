use std::collections::BTreeMap;

use anyhow::{Context, Result};

use fhirforge_core::corpus::load_baseline;
use fhirforge_core::eval::{aggregate, matrix_csv, prediff, render_matrix, AnnotationSet};

use crate::args::EvaluateArgs;
use crate::{EXIT_FAILURE, EXIT_OK};

pub fn run(args: EvaluateArgs) -> Result<u8> {
    let pd = args.pred.as_deref().map(load_baseline).transpose()?;
    let hb = args.baseline.as_deref().map(load_baseline).transpose()?;

    let Some(path) = &args.annotations else {
        let (pd, hb) = (pd.expect("clap requires --pred"), hb.expect("clap requires --baseline"));
        let set = AnnotationSet::new(prediff(&pd, &hb));
        std::fs::write(&args.out, set.to_jsonl()).with_context(|| format!("cannot write {}", args.out.display()))?;
        let mut tags: BTreeMap<&str, usize> = BTreeMap::new();
        for item in &set.items {
            *tags.entry(item.tag.sigil()).or_default() += 1;
        }
        let counts: Vec<String> = tags.iter().map(|(t, n)| format!("{t} {n}")).collect();
        println!("{} provisional item(s) written to {}", set.items.len(), args.out.display());
        println!("tags: {}", counts.join(", "));
        let ambiguous = set.items.iter().filter(|i| i.ambiguous).count();
        if ambiguous > 0 {
            println!("{ambiguous} item(s) need manual alignment");
        }
        return Ok(EXIT_OK);
    };

    let matrix = match AnnotationSet::load(path).and_then(|set| aggregate(&set)) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return Ok(EXIT_FAILURE);
        }
    };
    print!("{}", render_matrix(&matrix));
    if let Some(csv) = &args.csv {
        std::fs::write(csv, matrix_csv(&matrix)).with_context(|| format!("cannot write {}", csv.display()))?;
    }
    Ok(EXIT_OK)
}
