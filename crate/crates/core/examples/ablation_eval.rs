//! Evaluate the demo benchmark with each knowledge agent switched off.
//!
//!     cargo run --example ablation_eval

#[path = "text_question.rs"]
#[allow(dead_code)]
mod text_question;

use std::path::Path;

use whistle::bench::{evaluate_pipeline, fmt2, load_benchmark};
use whistle::config::Overrides;

pub fn run(out: &Path) -> anyhow::Result<()> {
    let bench = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo/bench.json");
    let items = load_benchmark(&bench)?;
    let variants = [
        ("full", Overrides::default()),
        ("w/o rule agent", Overrides { ablate_rule: true, ..Overrides::default() }),
        ("w/o case agent", Overrides { ablate_case: true, ..Overrides::default() }),
    ];
    println!("{:<16}{:>8}{:>8}{:>9}", "variant", "text", "video", "overall");
    for (name, overrides) in variants {
        let cfg = text_question::demo_config(out, overrides)?;
        let (pipeline, _) = cfg.build_pipeline()?;
        let (report, traces) = evaluate_pipeline(&items, &pipeline, cfg.parallel)?;
        let f = |x: Option<f64>| x.map(fmt2).unwrap_or_else(|| "-".into());
        println!(
            "{name:<16}{:>8}{:>8}{:>9}",
            f(report.text_acc),
            f(report.video_acc),
            f(report.overall_acc)
        );
        let retrievals: usize = traces.iter().map(|t| t.retrievals().count()).sum();
        println!("{:<16}{retrievals} retrievals, {} model calls", "", traces.iter().map(|t| t.call_count()).sum::<usize>());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    run(dir.path())
}
