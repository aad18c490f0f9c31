//! Build the precedent base from the 184-case file, save it, load it back.
//!
//!     cargo run --example ingest_cases

use std::collections::BTreeMap;
use std::path::Path;

use whistle::backends::{Embedder, HashEmbedder};
use whistle::kb::{ingest_cases, load_case_records, load_index_for, save_index};

pub fn run(out: &Path) -> anyhow::Result<()> {
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/cases.json");
    let embedder = HashEmbedder::default();
    let records = load_case_records(&file)?;
    let (kb, report) = ingest_cases(&records, &embedder, 4)?;
    println!("{} records, {} ingested, {} rejected", records.len(), kb.len(), report.rejected.len());

    let mut by_source = BTreeMap::new();
    for c in kb.cases().unwrap_or_default() {
        *by_source.entry(c.source.as_str()).or_insert(0) += 1;
    }
    for (source, n) in &by_source {
        println!("  {source:<24}{n:>4}");
    }

    let path = out.join("cases.index.json");
    save_index(&kb, &path)?;
    // Loading with a different embedder fingerprint would fail as stale.
    let again = load_index_for(&path, embedder.fingerprint())?;
    assert_eq!(again, kb);
    println!("saved and reloaded {}", path.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    run(dir.path())
}
