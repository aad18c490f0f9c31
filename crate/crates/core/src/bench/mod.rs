//! Benchmark files, accuracy evaluation, weighted aggregation and the
//! blind human-evaluation workflow.

mod aggregate;
mod human;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::pipeline::{route, AblationConfig, AgentTrace, Materials, Modality, Pipeline, Query};
use crate::{LabeledOption, OptionId};

pub use aggregate::{fmt2, hundredths, map_severity_labels, round_half_up, weighted_overall, SEVERITY_LABELS};
pub use human::{
    aggregate_ratings, export_human_eval_packets, sample_for_human_eval, HumanEvalSample,
    HumanEvalSummary, KeyEntry, KeyFile, Packet, PacketClip, PacketFile, RatingRecord, SampleRef,
    SubsetScores, SLOT_A, SLOT_B,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemError {
    pub index: usize,
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ItemError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "item {} field `{}`: {}", self.index, self.field, self.message)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{} invalid item(s): {}", .0.len(), .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<ItemError>),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("cannot sample {requested} {subset} items, only {available} available (short by {})", .requested - .available)]
    Shortfall {
        subset: Modality,
        requested: usize,
        available: usize,
    },
    #[error("system {system:?} has no explanation for {question_id}")]
    MissingExplanation { system: String, question_id: String },
    #[error("packet for {sample_id} would reveal system name {system:?}")]
    Blindness { system: String, sample_id: String },
    #[error("invalid rating: {0}")]
    Rating(String),
    #[error("unrecognised severity label {0:?}")]
    UnknownLabel(String),
}

/// A material entry: either a video object or a marker string such as
/// `"none"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Material {
    Video { path: String, context: String },
    Marker(String),
}

/// One benchmark record, field for field as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchItem {
    #[serde(rename = "Q")]
    pub question: String,
    #[serde(default)]
    pub materials: Vec<Material>,
    #[serde(rename = "openA")]
    pub open_answer: String,
    #[serde(rename = "closeA")]
    pub close_answer: String,
    #[serde(rename = "O1")]
    pub o1: String,
    #[serde(rename = "O2")]
    pub o2: String,
    #[serde(rename = "O3", default, skip_serializing_if = "Option::is_none")]
    pub o3: Option<String>,
    #[serde(rename = "O4", default, skip_serializing_if = "Option::is_none")]
    pub o4: Option<String>,
}

/// Stable id of the item at `index` in its benchmark file.
pub fn question_id(index: usize) -> String {
    format!("q{:04}", index + 1)
}

impl BenchItem {
    pub fn options(&self) -> Vec<LabeledOption> {
        [Some(&self.o1), Some(&self.o2), self.o3.as_ref(), self.o4.as_ref()]
            .into_iter()
            .map_while(|o| o)
            .enumerate()
            .map(|(i, text)| LabeledOption {
                id: OptionId::new(i as u8 + 1).expect("at most four options"),
                text: text.clone(),
            })
            .collect()
    }

    /// The first video material, if any.
    pub fn video(&self) -> Option<(&str, &str)> {
        self.materials.iter().find_map(|m| match m {
            Material::Video { path, context } => Some((path.as_str(), context.as_str())),
            Material::Marker(_) => None,
        })
    }

    pub fn modality(&self) -> Modality {
        if self.video().is_some() {
            Modality::Video
        } else {
            Modality::Text
        }
    }

    /// `closeA` as an option id, if it names one of the item's options.
    pub fn gold(&self) -> Option<OptionId> {
        let id: OptionId = self.close_answer.trim().parse().ok()?;
        ((id.number() as usize) <= self.options().len()).then_some(id)
    }

    /// Field-level problems, reported against `index`.
    pub fn validate(&self, index: usize) -> Result<(), Vec<ItemError>> {
        let mut errs = Vec::new();
        let mut err = |field: &str, message: String| {
            errs.push(ItemError {
                index,
                field: field.into(),
                message,
            })
        };
        if self.question.trim().is_empty() {
            err("Q", "question is empty".into());
        }
        if self.o4.is_some() && self.o3.is_none() {
            err("O4", "O4 is present without O3".into());
        }
        for (field, text) in [("O1", Some(&self.o1)), ("O2", Some(&self.o2)), ("O3", self.o3.as_ref()), ("O4", self.o4.as_ref())] {
            if text.is_some_and(|t| t.trim().is_empty()) {
                err(field, "option text is empty".into());
            }
        }
        if self.gold().is_none() {
            err(
                "closeA",
                format!("{:?} does not name one of the item's {} options", self.close_answer, self.options().len()),
            );
        }
        if let Some((path, _)) = self.video() {
            if path.trim().is_empty() {
                err("materials", "video path is empty".into());
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    pub fn to_query(&self, index: usize) -> Result<Query, BenchError> {
        self.validate(index).map_err(BenchError::Invalid)?;
        let materials = match self.video() {
            Some((path, context)) => Materials::Video {
                path: path.to_string(),
                context: context.to_string(),
            },
            None => Materials::TextOnly,
        };
        Query::new(
            question_id(index),
            self.question.clone(),
            materials,
            self.options(),
            self.gold(),
            Some(self.open_answer.clone()),
        )
        .map_err(|e| BenchError::Contract(e.to_string()))
    }
}

const REQUIRED_STRINGS: [&str; 5] = ["Q", "openA", "closeA", "O1", "O2"];

fn check_shape(index: usize, v: &Value) -> Vec<ItemError> {
    let mut errs = Vec::new();
    let mut err = |field: &str, message: &str| {
        errs.push(ItemError {
            index,
            field: field.into(),
            message: message.into(),
        })
    };
    let Some(obj) = v.as_object() else {
        err("-", "item is not an object");
        return errs;
    };
    for f in REQUIRED_STRINGS {
        match obj.get(f) {
            None => err(f, "missing"),
            Some(Value::String(_)) => {}
            Some(_) => err(f, "must be a string"),
        }
    }
    for f in ["O3", "O4"] {
        if obj.get(f).is_some_and(|v| !v.is_string() && !v.is_null()) {
            err(f, "must be a string");
        }
    }
    match obj.get("materials") {
        None => {}
        Some(Value::Array(ms)) => {
            for m in ms {
                let ok = m.is_string()
                    || (m.get("path").is_some_and(Value::is_string)
                        && m.get("context").is_some_and(Value::is_string));
                if !ok {
                    err("materials", "entries must be strings or {path, context} objects");
                }
            }
        }
        Some(_) => err("materials", "must be a list"),
    }
    errs
}

/// Parse and validate a benchmark array. Every bad item is reported.
pub fn parse_benchmark(raw: &str, origin: &str) -> Result<Vec<BenchItem>, BenchError> {
    let values: Vec<Value> = serde_json::from_str(raw).map_err(|e| BenchError::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    let mut items = Vec::new();
    let mut errs = Vec::new();
    for (i, v) in values.into_iter().enumerate() {
        let shape = check_shape(i, &v);
        if !shape.is_empty() {
            errs.extend(shape);
            continue;
        }
        match serde_json::from_value::<BenchItem>(v) {
            Ok(item) => match item.validate(i) {
                Ok(()) => items.push(item),
                Err(e) => errs.extend(e),
            },
            Err(e) => errs.push(ItemError {
                index: i,
                field: "-".into(),
                message: e.to_string(),
            }),
        }
    }
    if errs.is_empty() {
        Ok(items)
    } else {
        Err(BenchError::Invalid(errs))
    }
}

pub fn load_benchmark(path: &Path) -> Result<Vec<BenchItem>, BenchError> {
    let raw = fs::read_to_string(path).map_err(|e| BenchError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_benchmark(&raw, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub question_id: String,
    pub modality: Modality,
    pub predicted: Option<OptionId>,
    pub gold: OptionId,
    pub correct: bool,
    pub trace_ref: String,
}

/// Accuracies are percentages in full precision; `None` for an empty
/// subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub text_correct: usize,
    pub text_total: usize,
    pub video_correct: usize,
    pub video_total: usize,
    pub text_acc: Option<f64>,
    pub video_acc: Option<f64>,
    pub overall_acc: Option<f64>,
    pub per_item: Vec<ItemResult>,
}

fn pct(correct: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| 100.0 * correct as f64 / total as f64)
}

impl EvalReport {
    /// Score `per_item`; unanswered items count as incorrect.
    pub fn from_results(per_item: Vec<ItemResult>) -> Self {
        let count = |m: Modality| {
            let subset = per_item.iter().filter(|r| r.modality == m);
            (subset.clone().filter(|r| r.correct).count(), subset.count())
        };
        let (text_correct, text_total) = count(Modality::Text);
        let (video_correct, video_total) = count(Modality::Video);
        Self {
            text_correct,
            text_total,
            video_correct,
            video_total,
            text_acc: pct(text_correct, text_total),
            video_acc: pct(video_correct, video_total),
            overall_acc: pct(text_correct + video_correct, text_total + video_total),
            per_item,
        }
    }

    pub fn answered(&self) -> usize {
        self.per_item.iter().filter(|r| r.predicted.is_some()).count()
    }

    /// `text 66.67 / video 50.00 / overall 60.00`.
    pub fn summary_line(&self) -> String {
        let f = |x: Option<f64>| x.map(fmt2).unwrap_or_else(|| "-".into());
        format!(
            "text {} / video {} / overall {}",
            f(self.text_acc),
            f(self.video_acc),
            f(self.overall_acc)
        )
    }
}

fn pool(parallelism: usize) -> Result<rayon::ThreadPool, BenchError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| BenchError::Contract(format!("thread pool: {e}")))
}

fn queries(items: &[BenchItem]) -> Result<Vec<Query>, BenchError> {
    if items.is_empty() {
        return Err(BenchError::Contract("nothing to evaluate".into()));
    }
    let mut out = Vec::with_capacity(items.len());
    let mut errs = Vec::new();
    for (i, item) in items.iter().enumerate() {
        match item.to_query(i) {
            Ok(q) => out.push(q),
            Err(BenchError::Invalid(e)) => errs.extend(e),
            Err(e) => return Err(e),
        }
    }
    if errs.is_empty() {
        Ok(out)
    } else {
        Err(BenchError::Invalid(errs))
    }
}

fn result_for(q: &Query, predicted: Option<OptionId>) -> ItemResult {
    let gold = q.ground_truth_close.expect("benchmark queries carry a gold label");
    ItemResult {
        question_id: q.id.clone(),
        modality: route(q),
        predicted,
        gold,
        correct: predicted == Some(gold),
        trace_ref: q.id.clone(),
    }
}

/// Score any system mapping a question to an option (or `None` for no
/// answer). Items are dispatched on up to `parallelism` threads; the
/// report is in item order.
pub fn evaluate<F>(items: &[BenchItem], sut: F, parallelism: usize) -> Result<EvalReport, BenchError>
where
    F: Fn(&Query) -> Option<OptionId> + Sync,
{
    let qs = queries(items)?;
    let results = pool(parallelism)?.install(|| {
        qs.par_iter()
            .map(|q| result_for(q, sut(q)))
            .collect::<Vec<_>>()
    });
    Ok(EvalReport::from_results(results))
}

/// Run the full pipeline on every item, keeping each question's trace.
pub fn evaluate_pipeline(
    items: &[BenchItem],
    pipeline: &Pipeline,
    parallelism: usize,
) -> Result<(EvalReport, Vec<AgentTrace>), BenchError> {
    let qs = queries(items)?;
    let traced: Vec<(ItemResult, AgentTrace)> = pool(parallelism)?.install(|| {
        qs.par_iter()
            .map(|q| {
                let trace = pipeline.run(q);
                (result_for(q, trace.verdict.as_ref().map(|v| v.decision)), trace)
            })
            .collect()
    });
    let (results, traces) = traced.into_iter().unzip();
    Ok((EvalReport::from_results(results), traces))
}

/// Everything needed to reproduce a run, stored next to its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub benchmark: String,
    pub backend_ids: BTreeMap<String, String>,
    pub ablation: AblationConfig,
    pub k_text: usize,
    pub k_video: usize,
    pub rules_fingerprint: Option<String>,
    pub cases_fingerprint: Option<String>,
    pub embedder_fingerprint: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub metadata: RunMetadata,
    pub report: EvalReport,
}
