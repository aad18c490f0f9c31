//! A video question: the video agent describes the clip and that
//! description, not the question, drives retrieval.
//!
//!     cargo run --example video_question

#[path = "text_question.rs"]
#[allow(dead_code)]
mod text_question;

use std::path::Path;

use whistle::agents::AgentRole;
use whistle::bench::load_benchmark;
use whistle::config::Overrides;

pub fn run(out: &Path) -> anyhow::Result<()> {
    let (pipeline, _) = text_question::demo_config(out, Overrides::default())?.build_pipeline()?;
    let bench = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo/bench.json");
    let items = load_benchmark(&bench)?;
    // Item 6 is the one where the chief overrules the video agent.
    let query = items[5].to_query(5)?;
    let trace = pipeline.run(&query);

    let video = trace.video_analysis().expect("video agent succeeded");
    println!("question:    {}", query.question);
    println!("video sees:  {}", video.description);
    println!("video picks: {}", video.recommended_option);
    for r in trace.retrievals() {
        let hits: Vec<String> = r.hits.iter().map(|h| h.entry_ref.to_string()).collect();
        println!("{} retrieved with the video description: {}", r.kb, hits.join(", "));
        assert_eq!(r.query_text, video.description);
    }
    if let Some(step) = trace.step(AgentRole::Context) {
        println!("context:     {}", step.report.as_ref().map(|r| r["strictness"].to_string()).unwrap_or_default());
    }
    let verdict = trace.verdict.expect("scripted chief answers");
    println!("chief rules: {} ({})", verdict.decision, verdict.explanation);
    println!("gold:        {}", items[5].close_answer);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    run(dir.path())
}
