#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use regex::Regex;
use whistle::agents::{
    run_case_agent, run_chief_agent, run_context_agent, run_rule_agent, run_video_agent,
    AgentContext, CallRecord, CaseSummary, ChiefInputs, Confidence, ConfidenceLevel,
    ContextAnalysis, RuleSummary, Slot, Strictness, VideoAnalysis,
};
use whistle::backends::{
    ChatBackend, Embedder, GenerationParams, HashEmbedder, ImagePayload, ScriptedBackend,
};
use whistle::bench::{evaluate_pipeline, load_benchmark, EvalReport};
use whistle::kb::{
    ingest_cases, ingest_rule_pages, load_case_records, load_rule_pages, CaseEntry, KnowledgeBase,
    RuleSegment,
};
use whistle::pipeline::{
    AblationConfig, AgentBackends, AgentTrace, DirectoryFrames, KnowledgeBases, Pipeline,
    PipelineConfig,
};
use whistle::{LabeledOption, OptionId};

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn demo_dir() -> PathBuf {
    data_dir().join("demo")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn rules_kb(embedder: &dyn Embedder) -> KnowledgeBase {
    let pages = load_rule_pages(&data_dir().join("laws")).unwrap();
    let meta = BTreeMap::from([("edition".to_string(), "2025/26".to_string())]);
    ingest_rule_pages(&pages, &meta, embedder, 2).unwrap().0
}

pub fn cases_kb(embedder: &dyn Embedder) -> KnowledgeBase {
    let records = load_case_records(&data_dir().join("cases.json")).unwrap();
    ingest_cases(&records, embedder, 2).unwrap().0
}

pub fn demo_backend() -> Arc<dyn ChatBackend> {
    Arc::new(ScriptedBackend::from_file("scripted", &demo_dir().join("script.json")).unwrap())
}

/// The demo benchmark pipeline: scripted replies, hash embeddings, frames
/// from `data/demo/clips`.
pub fn demo_pipeline(ablation: AblationConfig) -> Pipeline {
    demo_pipeline_with(ablation, AgentBackends::uniform(demo_backend()))
}

pub fn demo_pipeline_with(ablation: AblationConfig, backends: AgentBackends) -> Pipeline {
    let embedder: Arc<dyn Embedder> = Arc::new(HashEmbedder::default());
    let kbs = KnowledgeBases {
        rules: Some(Arc::new(rules_kb(embedder.as_ref()))),
        cases: Some(Arc::new(cases_kb(embedder.as_ref()))),
    };
    Pipeline::new(
        kbs,
        backends,
        embedder,
        Arc::new(DirectoryFrames::new(Some(demo_dir()))),
        PipelineConfig {
            k_text: 3,
            k_video: 3,
            ablation,
            params: GenerationParams::default(),
        },
    )
}

pub fn run_demo(ablation: AblationConfig) -> (EvalReport, Vec<AgentTrace>) {
    let items = load_benchmark(&demo_dir().join("bench.json")).unwrap();
    evaluate_pipeline(&items, &demo_pipeline(ablation), 3).unwrap()
}

/// Match `actual` against a golden template, treating each `{name}` as a
/// wildcard. Returns what each placeholder matched.
pub fn match_golden(golden: &str, actual: &str) -> Result<BTreeMap<String, String>, String> {
    let slot = Regex::new(r"\{([a-z_][a-z0-9_]*)\}").unwrap();
    let mut pattern = String::from("(?s)\\A");
    let mut names = Vec::new();
    let mut last = 0;
    for c in slot.captures_iter(golden) {
        let m = c.get(0).unwrap();
        pattern.push_str(&regex::escape(&golden[last..m.start()]));
        let name = c[1].to_string();
        if names.contains(&name) {
            pattern.push_str(&format!("(?P<{name}_{}>.*?)", names.len()));
        } else {
            pattern.push_str(&format!("(?P<{name}>.*?)"));
        }
        names.push(name);
        last = m.end();
    }
    pattern.push_str(&regex::escape(&golden[last..]));
    pattern.push_str("\\z");
    let re = Regex::new(&pattern).map_err(|e| e.to_string())?;
    let caps = re
        .captures(actual)
        .ok_or_else(|| first_difference(golden, actual))?;
    Ok(names
        .iter()
        .filter_map(|n| caps.name(n).map(|m| (n.clone(), m.as_str().to_string())))
        .collect())
}

fn first_difference(golden: &str, actual: &str) -> String {
    let line = golden
        .lines()
        .zip(actual.lines())
        .position(|(g, a)| g != a && !g.contains('{'))
        .unwrap_or(0);
    format!(
        "prompt differs from golden near line {}: golden {:?}, actual {:?}",
        line + 1,
        golden.lines().nth(line).unwrap_or(""),
        actual.lines().nth(line).unwrap_or("")
    )
}

pub fn golden(name: &str) -> String {
    let raw = fs::read_to_string(golden_dir().join(name)).unwrap();
    raw.strip_suffix('\n').unwrap_or(&raw).to_string()
}

/// One prompt actually sent by an agent, with the slot values it should
/// carry.
pub struct SentPrompt {
    pub agent: &'static str,
    pub call: CallRecord,
    pub expected_slots: BTreeMap<&'static str, String>,
}

fn options() -> Vec<LabeledOption> {
    ["No offence", "Offence with no card", "Offence with yellow card", "Offence with possible red card"]
        .iter()
        .enumerate()
        .map(|(i, t)| LabeledOption {
            id: OptionId::new(i as u8 + 1).unwrap(),
            text: t.to_string(),
        })
        .collect()
}

/// Drive every agent once through a scripted backend and collect the
/// prompts they sent.
pub fn sent_prompts() -> Vec<SentPrompt> {
    let backend = ScriptedBackend::from_pairs(
        "golden",
        [
            ("g/rule", r#"{"direct_quote":"q","key_terminology_match":"m","confidence":0.9}"#),
            ("g/case", r#"{"summary":"s","cited_case_ids":[]}"#),
            ("g/context", r#"{"strictness":"Normal","analysis":"a"}"#),
            ("g/video", r#"{"choice_explanation":"late tackle","predicted_option":"O3"}"#),
            ("g/chief", "Prediction: O3\nExplanation: e"),
        ],
    );
    let ctx = AgentContext {
        backend: &backend,
        question_id: "g",
        params: GenerationParams::default(),
    };
    let embedding = HashEmbedder::default();
    let v = whistle::backends::embed_text(&embedding, "x").unwrap();
    let seg = RuleSegment {
        segment_id: "laws-p0012".into(),
        page_number: 12,
        text: "A player is sent off for serious foul play.".into(),
        metadata: BTreeMap::new(),
        embedding: v.clone(),
    };
    let case = CaseEntry {
        id: 61,
        case_description: "2012 UCL: John Terry knees Alexis Sanchez in the back during an off-the-ball incident.".into(),
        decision: "Red card issued.".into(),
        controversiality: whistle::kb::Controversiality::Non,
        source: whistle::kb::CaseSource::ChampionsLeague,
        embedding: v,
    };
    let scenario = "A defender lunges studs-up at an attacker.";
    let opts = options();
    let q = "What decision should the referee make?";

    let mut out = Vec::new();
    let mut push = |agent, mut calls: Vec<CallRecord>, slots: &[(&'static str, String)]| {
        out.push(SentPrompt {
            agent,
            call: calls.remove(0),
            expected_slots: slots.iter().cloned().collect(),
        })
    };
    push(
        "rule",
        run_rule_agent(&ctx, scenario, &[&seg]).calls,
        &[
            ("retrieved_rules", "[Page 12 | laws-p0012]\nA player is sent off for serious foul play.".into()),
            ("query_text", scenario.into()),
        ],
    );
    push(
        "case",
        run_case_agent(&ctx, scenario, &[&case]).calls,
        &[
            (
                "retrieved_cases",
                "[Case #61 | UEFA Champions League | Non-controversial]\nCase: 2012 UCL: John Terry knees Alexis Sanchez in the back during an off-the-ball incident.\nDecision: Red card issued.".into(),
            ),
            ("query_text", scenario.into()),
        ],
    );
    push(
        "context",
        run_context_agent(&ctx, "Serie A, Juventus 1 - 0 Monaco").calls,
        &[("context_str", "Serie A, Juventus 1 - 0 Monaco".into())],
    );
    let frames = vec![ImagePayload::new("image/png", vec![0; 4])];
    let options_block = "O1: No offence\nO2: Offence with no card\nO3: Offence with yellow card\nO4: Offence with possible red card";
    push(
        "video",
        run_video_agent(&ctx, &frames, q, &opts).calls,
        &[("question_text", q.into()), ("options_str", options_block.into())],
    );
    let rule = RuleSummary {
        direct_quote: "A player is sent off for serious foul play.".into(),
        key_terminology_match: "serious foul play".into(),
        confidence: Confidence { level: ConfidenceLevel::High, score: Some(0.9) },
        raw: String::new(),
    };
    let cs = CaseSummary { summary: "Terry was sent off.".into(), cited_case_ids: vec![61], raw: String::new() };
    let cx = ContextAnalysis { strictness: Strictness::Strict, analysis: "A final.".into(), raw: String::new() };
    let va = VideoAnalysis {
        description: "late tackle".into(),
        recommended_option: OptionId::new(3).unwrap(),
        raw: String::new(),
    };
    let inputs = ChiefInputs {
        question_text: q,
        options: &opts,
        rule: Slot::Report(&rule),
        case: Slot::Report(&cs),
        context: Slot::Report(&cx),
        video: Slot::Report(&va),
    };
    push(
        "chief",
        run_chief_agent(&ctx, &inputs).calls,
        &[
            ("question_text", q.into()),
            ("options_text", options_block.into()),
            (
                "rule_str_placeholder",
                "Text of Law: A player is sent off for serious foul play.\nMatch Logic: serious foul play\nConfidence: High (0.9)".into(),
            ),
            ("case_str_placeholder", "Terry was sent off.\nPrecedent status: Valid Precedent (cases #61)".into()),
            ("context_analysis", "Strictness: Strict\nAnalysis: A final.".into()),
            ("desc", "late tackle".into()),
            ("pred", "O3".into()),
        ],
    );
    out
}

/// Check one sent prompt against its golden pair. Errors describe the
/// first mismatch.
pub fn check_golden(p: &SentPrompt) -> Result<(), String> {
    let sys = golden(&format!("{}.system.txt", p.agent));
    if p.call.system_prompt != sys {
        return Err(format!("{} system prompt differs from golden", p.agent));
    }
    let user = golden(&format!("{}.user.txt", p.agent));
    let slots = match_golden(&user, &p.call.user_prompt).map_err(|e| format!("{}: {e}", p.agent))?;
    for (name, want) in &p.expected_slots {
        match slots.get(*name) {
            Some(got) if got == want => {}
            got => return Err(format!("{}: slot {name} = {got:?}, want {want:?}", p.agent)),
        }
    }
    Ok(())
}

/// A benchmark with `n_text` text items followed by `n_video` video items.
pub fn synthetic_bench(n_text: usize, n_video: usize) -> Vec<whistle::bench::BenchItem> {
    use whistle::bench::{BenchItem, Material};
    (0..n_text + n_video)
        .map(|i| {
            let video = i >= n_text;
            BenchItem {
                question: format!("Incident {i}: a defender challenges the attacker in the area. What follows?"),
                materials: if video {
                    vec![Material::Video {
                        path: format!("clips/clip_{i}.mp4"),
                        context: format!("League match, week {}", i % 34 + 1),
                    }]
                } else {
                    vec![Material::Marker("none".into())]
                },
                open_answer: "Penalty kick.".into(),
                close_answer: format!("O{}", i % 4 + 1),
                o1: "No offence".into(),
                o2: "Offence with no card".into(),
                o3: Some("Offence with yellow card".into()),
                o4: Some("Offence with possible red card".into()),
            }
        })
        .collect()
}

/// Explanations for every item of `items` from each named system.
pub fn explanations(
    items: &[whistle::bench::BenchItem],
    systems: &[&str],
) -> BTreeMap<String, BTreeMap<String, String>> {
    systems
        .iter()
        .enumerate()
        .map(|(s, name)| {
            let per_q = (0..items.len())
                .map(|i| {
                    (
                        whistle::bench::question_id(i),
                        format!("Reasoning {s}-{i}: the challenge was careless, so a direct free kick follows."),
                    )
                })
                .collect();
            (name.to_string(), per_q)
        })
        .collect()
}

/// Printed per-rater (text, video) means from the human study, keyed by
/// system: baseline first, then ours.
pub const RATER_MEANS: [(&str, [(f64, f64); 3]); 2] = [
    ("baseline", [(3.63, 2.70), (3.65, 2.70), (3.72, 2.80)]),
    ("ours", [(3.76, 2.76), (4.09, 3.24), (3.96, 3.18)]),
];
pub const RATER_IDS: [&str; 3] = ["referee-1", "referee-2", "referee-3"];

/// Integer 1..=5 scores whose mean over `n` is exactly `mean`.
pub fn scores_with_mean(mean: f64, n: usize) -> Vec<i64> {
    let total = (mean * n as f64).round() as i64;
    let base = total / n as i64;
    let extra = (total - base * n as i64) as usize;
    (0..n).map(|i| if i < extra { base + 1 } else { base }).collect()
}

/// Ratings from three raters reproducing [`RATER_MEANS`] once unmasked
/// through `key`.
pub fn study_ratings(key: &whistle::bench::KeyFile) -> Vec<whistle::bench::RatingRecord> {
    use whistle::bench::{RatingRecord, SLOT_A, SLOT_B};
    use whistle::pipeline::Modality;
    let mut out = Vec::new();
    for (r, rater) in RATER_IDS.iter().enumerate() {
        let mut pools: BTreeMap<(&'static str, Modality), std::vec::IntoIter<i64>> = BTreeMap::new();
        for (system, means) in RATER_MEANS {
            let (t, v) = means[r];
            pools.insert((system, Modality::Text), scores_with_mean(t, key.n_text).into_iter());
            pools.insert((system, Modality::Video), scores_with_mean(v, key.n_video).into_iter());
        }
        for e in &key.entries {
            let mut score = |system: &str| {
                let k = pools.keys().find(|(s, m)| *s == system && *m == e.modality).copied().unwrap();
                pools.get_mut(&k).unwrap().next().unwrap()
            };
            let scores = BTreeMap::from([
                (SLOT_A.to_string(), score(&e.slot_a)),
                (SLOT_B.to_string(), score(&e.slot_b)),
            ]);
            out.push(RatingRecord {
                sample_id: e.sample_id.clone(),
                rater_id: rater.to_string(),
                scores,
            });
        }
    }
    out
}
