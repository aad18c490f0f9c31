//! The `whistle` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bench::{
    aggregate_ratings, evaluate_pipeline, export_human_eval_packets, load_benchmark,
    sample_for_human_eval, BenchItem, EvalRun, HumanEvalSample, KeyFile, Material, RatingRecord,
};
use crate::config::{Overrides, RunConfig};
use crate::kb::{
    ingest_cases, ingest_rule_pages, load_case_records, load_rule_pages, save_index, IngestReport,
    KbKind, KnowledgeBase,
};
use crate::pipeline::{read_traces_jsonl, write_traces_jsonl, AgentTrace, Query};

#[derive(Debug, Parser)]
#[command(name = "whistle", version, about = "Retrieval-augmented multi-agent refereeing decisions")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON config with `backends`, `agents`, `embedder` and `run` sections.
    #[arg(long, global = true, env = "WHISTLE_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "WHISTLE_RULES_INDEX")]
    pub rules_index: Option<PathBuf>,
    #[arg(long, global = true, env = "WHISTLE_CASES_INDEX")]
    pub cases_index: Option<PathBuf>,
    /// Retrieval depth for both modes.
    #[arg(long, global = true, env = "WHISTLE_K")]
    pub k: Option<usize>,
    /// Run without the rule agent.
    #[arg(long, global = true)]
    pub ablate_rule: bool,
    /// Run without the case agent.
    #[arg(long, global = true)]
    pub ablate_case: bool,
    /// Questions (or embedding calls) in flight at once.
    #[arg(long, global = true, env = "WHISTLE_PARALLEL")]
    pub parallel: Option<usize>,
    #[arg(long, global = true, env = "WHISTLE_SEED")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "WHISTLE_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a knowledge-base index.
    Ingest(IngestArgs),
    /// Answer one question.
    Ask(AskArgs),
    /// Evaluate a benchmark file.
    Eval(EvalArgs),
    /// Blind human-evaluation tooling.
    #[command(name = "human-eval", subcommand)]
    HumanEval(HumanEvalCommand),
    /// Inspect traces.
    #[command(subcommand)]
    Trace(TraceCommand),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum IngestKind {
    Rules,
    Cases,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    pub kind: IngestKind,
    /// Rules: a directory of page_NNN.txt files or a JSONL file of
    /// {page, text}. Cases: a JSON array of case records.
    pub input: PathBuf,
    /// Index file to write (default: <out>/<kind>.index.json).
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long, default_value = "2025/26")]
    pub edition: String,
    #[arg(long, default_value = "Laws of the Game")]
    pub source: String,
}

#[derive(Debug, Args)]
pub struct AskArgs {
    /// A JSON file holding one benchmark item, or an array of them.
    #[arg(long, conflicts_with = "question")]
    pub file: Option<PathBuf>,
    /// Position in `--file` when it holds an array.
    #[arg(long, default_value_t = 0)]
    pub item: usize,
    #[arg(long)]
    pub question: Option<String>,
    /// Option text, repeated in order (O1, O2, ...).
    #[arg(long = "option")]
    pub options: Vec<String>,
    /// Expected option label, if known.
    #[arg(long)]
    pub answer: Option<String>,
    /// Video clip path; makes the question a video question.
    #[arg(long, requires = "context")]
    pub video: Option<PathBuf>,
    /// Match context for a video question.
    #[arg(long)]
    pub context: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub benchmark: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum HumanEvalCommand {
    /// Draw the evaluation sample.
    Sample {
        benchmark: PathBuf,
        #[arg(long, default_value_t = 100)]
        n_text: usize,
        #[arg(long, default_value_t = 50)]
        n_video: usize,
    },
    /// Write masked packets and the sealed key.
    Export {
        benchmark: PathBuf,
        /// sample.json from `human-eval sample`.
        #[arg(long)]
        sample: PathBuf,
        /// NAME=FILE, where FILE is a traces.jsonl from `eval` or a JSON
        /// map from question id to explanation. Exactly two.
        #[arg(long = "system", required = true)]
        systems: Vec<String>,
    },
    /// Unmask and aggregate ratings.
    Aggregate {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        ratings: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum TraceCommand {
    /// Print the trace of one question from <out>/traces.jsonl.
    Show {
        question_id: String,
        /// Raw JSON instead of the readable rendering.
        #[arg(long)]
        json: bool,
    },
}

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            rules_index: self.rules_index.clone(),
            cases_index: self.cases_index.clone(),
            k: self.k,
            ablate_rule: self.ablate_rule,
            ablate_case: self.ablate_case,
            parallel: self.parallel,
            seed: self.seed,
            out: self.out.clone(),
        }
    }

    fn run_config(&self) -> Result<RunConfig> {
        RunConfig::resolve(self.config.as_deref(), self.overrides())
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))
}

fn print_report(kind: KbKind, kb: &KnowledgeBase, report: &IngestReport, index: &Path) {
    println!("{} entries ({kind}) -> {}", kb.len(), index.display());
    if !report.rejected.is_empty() {
        println!("{} rejected:", report.rejected.len());
        for r in &report.rejected {
            println!("  #{}: {}", r.index, r.reason);
        }
    }
}

fn cmd_ingest(g: &GlobalArgs, a: &IngestArgs) -> Result<()> {
    let cfg = g.run_config()?;
    let embedder = cfg.embedder()?;
    if !a.input.exists() {
        bail!("input path {} does not exist", a.input.display());
    }
    let (kind, (kb, report)) = match a.kind {
        IngestKind::Rules => {
            let pages = load_rule_pages(&a.input)?;
            let meta = BTreeMap::from([
                ("edition".to_string(), a.edition.clone()),
                ("source".to_string(), a.source.clone()),
            ]);
            (KbKind::Rules, ingest_rule_pages(&pages, &meta, embedder.as_ref(), cfg.parallel)?)
        }
        IngestKind::Cases => {
            let records = load_case_records(&a.input)?;
            (KbKind::Cases, ingest_cases(&records, embedder.as_ref(), cfg.parallel)?)
        }
    };
    if kb.is_empty() {
        bail!("no entries in {}", a.input.display());
    }
    let index = a.index.clone().unwrap_or_else(|| cfg.out.join(format!("{kind}.index.json")));
    if let Some(dir) = index.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_index(&kb, &index)?;
    print_report(kind, &kb, &report, &index);
    Ok(())
}

fn ask_item(a: &AskArgs) -> Result<BenchItem> {
    if let Some(path) = &a.file {
        let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let value: serde_json::Value = serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))?;
        let one = match value {
            serde_json::Value::Array(mut items) => {
                if a.item >= items.len() {
                    bail!("{} holds {} item(s), --item {} is out of range", path.display(), items.len(), a.item);
                }
                items.swap_remove(a.item)
            }
            v => v,
        };
        let items = crate::bench::parse_benchmark(&serde_json::to_string(&[one])?, &path.display().to_string())?;
        return Ok(items.into_iter().next().expect("one item"));
    }
    let Some(question) = &a.question else {
        bail!("pass --file or --question with --option values");
    };
    if !(2..=4).contains(&a.options.len()) {
        bail!("pass 2 to 4 --option values");
    }
    let opt = |i: usize| a.options.get(i).cloned();
    let item = BenchItem {
        question: question.clone(),
        materials: match &a.video {
            Some(p) => vec![Material::Video {
                path: p.display().to_string(),
                context: a.context.clone().unwrap_or_default(),
            }],
            None => vec![Material::Marker("none".into())],
        },
        open_answer: String::new(),
        close_answer: a.answer.clone().unwrap_or_else(|| "O1".into()),
        o1: a.options[0].clone(),
        o2: a.options[1].clone(),
        o3: opt(2),
        o4: opt(3),
    };
    item.validate(0).map_err(crate::bench::BenchError::Invalid)?;
    Ok(item)
}

fn ask_query(a: &AskArgs) -> Result<Query> {
    let item = ask_item(a)?;
    let mut q = item.to_query(if a.file.is_some() { a.item } else { 0 })?;
    if a.file.is_none() && a.answer.is_none() {
        q.ground_truth_close = None;
    }
    Ok(q)
}

fn cmd_ask(g: &GlobalArgs, a: &AskArgs) -> Result<()> {
    let cfg = g.run_config()?;
    let q = ask_query(a)?;
    let (pipeline, _) = cfg.build_pipeline()?;
    let trace = pipeline.run(&q);
    fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("traces.jsonl");
    write_traces_jsonl(&path, [&trace])?;
    let mut out = std::io::stdout().lock();
    render_trace(&mut out, &trace, false)?;
    writeln!(out, "trace: {}", path.display())?;
    match (&trace.verdict, q.ground_truth_close) {
        (Some(v), Some(gold)) => writeln!(out, "expected: {gold} ({})", if v.decision == gold { "correct" } else { "incorrect" })?,
        (None, _) => bail!("{} unanswered: {}", q.id, trace.failure.unwrap_or_default()),
        _ => {}
    }
    Ok(())
}

fn cmd_eval(g: &GlobalArgs, a: &EvalArgs) -> Result<()> {
    let cfg = g.run_config()?;
    let items = load_benchmark(&a.benchmark)?;
    let (pipeline, mut metadata) = cfg.build_pipeline()?;
    metadata.benchmark = a.benchmark.display().to_string();
    let (report, traces) = evaluate_pipeline(&items, &pipeline, cfg.parallel)?;
    fs::create_dir_all(&cfg.out)?;
    let report_path = cfg.out.join("report.json");
    let traces_path = cfg.out.join("traces.jsonl");
    write_traces_jsonl(&traces_path, &traces)?;
    println!("{}", report.summary_line());
    println!(
        "answered {}/{}; text {}/{}, video {}/{}",
        report.answered(),
        report.per_item.len(),
        report.text_correct,
        report.text_total,
        report.video_correct,
        report.video_total
    );
    write_json(&report_path, &EvalRun { metadata, report })?;
    println!("report: {}\ntraces: {}", report_path.display(), traces_path.display());
    Ok(())
}

/// `{question_id: explanation}` from either a JSON map or eval traces.
fn load_explanations(path: &Path) -> Result<BTreeMap<String, String>> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        let traces = read_traces_jsonl(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(traces
            .into_iter()
            .filter_map(|t| Some((t.question_id, t.verdict?.explanation)))
            .collect());
    }
    read_json(path)
}

fn cmd_human_eval(g: &GlobalArgs, c: &HumanEvalCommand) -> Result<()> {
    let cfg = g.run_config()?;
    match c {
        HumanEvalCommand::Sample {
            benchmark,
            n_text,
            n_video,
        } => {
            let items = load_benchmark(benchmark)?;
            let sample = sample_for_human_eval(&items, *n_text, *n_video, cfg.seed)?;
            let path = cfg.out.join("sample.json");
            write_json(&path, &sample)?;
            println!("{} samples ({n_text} text, {n_video} video) -> {}", sample.samples.len(), path.display());
        }
        HumanEvalCommand::Export {
            benchmark,
            sample,
            systems,
        } => {
            let items = load_benchmark(benchmark)?;
            let sample: HumanEvalSample = read_json(sample)?;
            let mut explanations = BTreeMap::new();
            for spec in systems {
                let (name, file) = spec
                    .split_once('=')
                    .with_context(|| format!("--system expects NAME=FILE, got {spec:?}"))?;
                explanations.insert(name.to_string(), load_explanations(Path::new(file))?);
            }
            let (packets, key) = export_human_eval_packets(&items, &sample, &explanations, cfg.seed)?;
            fs::create_dir_all(&cfg.out)?;
            let packets_path = cfg.out.join("packets.json");
            fs::write(&packets_path, packets.to_json())?;
            let key_path = cfg.out.join("key.json");
            write_json(&key_path, &key)?;
            println!(
                "{} packets -> {}\nkey -> {} (keep away from raters)",
                packets.packets.len(),
                packets_path.display(),
                key_path.display()
            );
        }
        HumanEvalCommand::Aggregate { key, ratings } => {
            let key: KeyFile = read_json(key)?;
            let ratings: Vec<RatingRecord> = read_json(ratings)?;
            let summary = aggregate_ratings(&ratings, &key)?;
            print!("{}", summary.table());
            let path = cfg.out.join("human_eval_summary.json");
            write_json(&path, &summary)?;
            println!("summary: {}", path.display());
        }
    }
    Ok(())
}

/// Readable rendering of a trace.
pub fn render_trace(out: &mut impl Write, t: &AgentTrace, full: bool) -> std::io::Result<()> {
    writeln!(out, "question {} ({})", t.question_id, t.modality)?;
    if t.video_fallback {
        writeln!(out, "note: video agent failed; chief ran without visual evidence")?;
    }
    for step in &t.steps {
        let status = if step.succeeded() { "ok" } else { "failed" };
        writeln!(out, "- {} [{status}, {} call(s), {} ms]", step.agent, step.calls.len(), step.wall_time_ms)?;
        if let Some(r) = &step.retrieval {
            writeln!(out, "  retrieval from {} (k={}) with query: {:?}", r.kb, r.k, r.query_text)?;
            for h in &r.hits {
                writeln!(out, "    {}. {} (score {:.4})", h.rank, h.entry_ref, h.score)?;
            }
            if let Some(e) = &r.error {
                writeln!(out, "    error: {e}")?;
            }
        }
        if let Some(e) = &step.error {
            writeln!(out, "  error: {e}")?;
        }
        if full {
            for c in &step.calls {
                writeln!(out, "  call {} -> {}", c.request_tag, c.backend_id)?;
                writeln!(out, "  --- user prompt ---\n{}", c.user_prompt)?;
                match (&c.response, &c.error) {
                    (Some(r), _) => writeln!(out, "  --- response ---\n{r}")?,
                    (None, Some(e)) => writeln!(out, "  --- error ---\n{e}")?,
                    _ => {}
                }
            }
        }
    }
    match &t.verdict {
        Some(v) => writeln!(out, "decision: {}\nexplanation: {}", v.decision, v.explanation)?,
        None => writeln!(out, "unanswered: {}", t.failure.as_deref().unwrap_or("unknown"))?,
    }
    Ok(())
}

fn cmd_trace(g: &GlobalArgs, c: &TraceCommand) -> Result<()> {
    let cfg = g.run_config()?;
    let TraceCommand::Show { question_id, json } = c;
    let path = cfg.out.join("traces.jsonl");
    let traces = read_traces_jsonl(&path).with_context(|| format!("reading {}", path.display()))?;
    let t = traces
        .iter()
        .find(|t| &t.question_id == question_id)
        .with_context(|| format!("no trace for {question_id} in {}", path.display()))?;
    if *json {
        println!("{}", serde_json::to_string_pretty(t)?);
    } else {
        render_trace(&mut std::io::stdout().lock(), t, true)?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(g, a),
        Command::Ask(a) => cmd_ask(g, a),
        Command::Eval(a) => cmd_eval(g, a),
        Command::HumanEval(c) => cmd_human_eval(g, c),
        Command::Trace(c) => cmd_trace(g, c),
    }
}

/// Parse `args` and run, mapping errors to a non-zero exit.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Entry point of the `whistle` binary. Logging goes to stderr and is
/// filtered by `RUST_LOG` (default `warn`).
pub fn main() -> ExitCode {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .try_init();
    main_with(std::env::args_os())
}
