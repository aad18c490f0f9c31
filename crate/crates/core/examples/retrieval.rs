//! Top-k retrieval over the bundled law pages.
//!
//!     cargo run --example retrieval -- "defender handles the ball on the line"

use std::collections::BTreeMap;
use std::path::Path;

use whistle::backends::HashEmbedder;
use whistle::kb::{ingest_rule_pages, load_rule_pages, retrieve_top_k, EntryRef};

pub fn run(query: &str) -> anyhow::Result<()> {
    let laws = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/laws");
    let embedder = HashEmbedder::default();
    let pages = load_rule_pages(&laws)?;
    let meta = BTreeMap::from([("edition".to_string(), "2025/26".to_string())]);
    let (kb, report) = ingest_rule_pages(&pages, &meta, &embedder, 4)?;
    println!("{} pages indexed, {} rejected", kb.len(), report.rejected.len());
    println!("query: {query}");

    for hit in retrieve_top_k(query, &kb, 3, &embedder)? {
        let EntryRef::Segment(id) = &hit.entry_ref else { continue };
        let text = kb.rule(id).map(|s| s.text.as_str()).unwrap_or("");
        // The first sentence is enough to eyeball the ranking.
        let head = text.split_inclusive(". ").next().unwrap_or("").trim();
        println!("{}. {id} ({:.3})  {head}", hit.rank, hit.score);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    let query = std::env::args().nth(1).unwrap_or_else(|| "a late tackle with studs showing".into());
    run(&query)
}
