//! One text question through the full pipeline with scripted model replies.
//!
//!     cargo run --example text_question

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use whistle::backends::HashEmbedder;
use whistle::bench::load_benchmark;
use whistle::cli::render_trace;
use whistle::config::{Overrides, RunConfig};
use whistle::kb::{ingest_cases, ingest_rule_pages, load_case_records, load_rule_pages, save_index};

fn data() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

/// Index both knowledge bases into `out` and load the demo config, which
/// routes every agent to a scripted backend.
pub fn demo_config(out: &Path, mut overrides: Overrides) -> anyhow::Result<RunConfig> {
    let embedder = HashEmbedder::default();
    let meta = BTreeMap::from([("edition".to_string(), "2025/26".to_string())]);
    let (rules, _) = ingest_rule_pages(&load_rule_pages(&data().join("laws"))?, &meta, &embedder, 4)?;
    let (cases, _) = ingest_cases(&load_case_records(&data().join("cases.json"))?, &embedder, 4)?;
    overrides.rules_index = Some(out.join("rules.index.json"));
    overrides.cases_index = Some(out.join("cases.index.json"));
    save_index(&rules, overrides.rules_index.as_deref().unwrap())?;
    save_index(&cases, overrides.cases_index.as_deref().unwrap())?;
    overrides.out = Some(out.to_path_buf());
    RunConfig::resolve(Some(&data().join("demo/config.json")), overrides)
}

pub fn run(out: &Path) -> anyhow::Result<()> {
    let (pipeline, _) = demo_config(out, Overrides::default())?.build_pipeline()?;
    let items = load_benchmark(&data().join("demo/bench.json"))?;
    let query = items[0].to_query(0)?;
    println!("{}", query.question);

    let trace = pipeline.run(&query);
    render_trace(&mut std::io::stdout().lock(), &trace, false)?;
    let verdict = trace.verdict.as_ref().expect("scripted chief answers");
    println!("gold: {}", items[0].close_answer);
    assert_eq!(Some(verdict.decision), items[0].gold());
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    run(dir.path())
}
