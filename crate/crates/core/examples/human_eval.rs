//! Blind explanation rating: sample items, export anonymised packets for
//! two systems, score them, unmask and aggregate.
//!
//!     cargo run --example human_eval

#[path = "text_question.rs"]
#[allow(dead_code)]
mod text_question;

use std::collections::BTreeMap;
use std::path::Path;

use whistle::bench::{
    aggregate_ratings, evaluate_pipeline, export_human_eval_packets, load_benchmark,
    sample_for_human_eval, RatingRecord,
};
use whistle::config::Overrides;

pub fn run(out: &Path) -> anyhow::Result<()> {
    let bench = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo/bench.json");
    let items = load_benchmark(&bench)?;

    // The pipeline's explanations against a bare-answer baseline that only
    // names its option.
    let cfg = text_question::demo_config(out, Overrides::default())?;
    let (_, traces) = evaluate_pipeline(&items, &cfg.build_pipeline()?.0, 2)?;
    let mut explanations: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    for t in traces {
        let Some(v) = t.verdict else { continue };
        explanations.entry("pipeline".into()).or_default().insert(t.question_id.clone(), v.explanation);
        explanations.entry("bare-answer".into()).or_default().insert(t.question_id, format!("{}.", v.decision));
    }

    let seed = 7;
    let sample = sample_for_human_eval(&items, 4, 2, seed)?;
    let (packets, key) = export_human_eval_packets(&items, &sample, &explanations, seed)?;
    let json = packets.to_json();
    assert!(!json.contains("pipeline") && !json.contains("bare-answer"));
    println!("{} packets; first one as a rater sees it:", packets.packets.len());
    println!("{}", serde_json::to_string_pretty(&packets.packets[0])?);

    // Raters only see the packets. Both reward a reason over a bare label,
    // one more harshly than the other.
    let mut ratings = Vec::new();
    for p in &packets.packets {
        for (rater, with_reason, bare) in [("ref-1", 5, 1), ("ref-2", 4, 2)] {
            let scores = p
                .explanations
                .iter()
                .map(|(slot, text)| (slot.clone(), if text.len() > 4 { with_reason } else { bare }))
                .collect();
            ratings.push(RatingRecord {
                sample_id: p.sample_id.clone(),
                rater_id: rater.into(),
                scores,
            });
        }
    }
    let summary = aggregate_ratings(&ratings, &key)?;
    print!("{}", summary.table());
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    run(dir.path())
}
