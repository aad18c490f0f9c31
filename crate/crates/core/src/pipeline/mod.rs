//! Modality routing and the two reasoning chains.
//!
//! Text mode: the question stem is the retrieval query for both knowledge
//! bases; the rule and case agents run in parallel and the chief decides.
//!
//! Video mode: the video and context agents run in parallel. The video
//! agent's description, not the question, is the retrieval query for both
//! knowledge bases. The chief then sees every report, including the video
//! agent's own recommendation.

mod frames;
mod trace;

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    run_case_agent, run_chief_agent, run_context_agent, run_rule_agent, run_video_agent,
    AgentContext, AgentRole, AgentRun, CaseSummary, ChiefInputs, ContextAnalysis, RuleSummary,
    Slot, Verdict, VideoAnalysis,
};
use crate::backends::{ChatBackend, Embedder, GenerationParams};
use crate::kb::{retrieve_top_k, CaseEntry, EntryRef, KbKind, KnowledgeBase, RuleSegment, DEFAULT_TOP_K};
use crate::{LabeledOption, OptionId};

pub use frames::{uniform_indices, CommandFrames, DirectoryFrames, FrameError, FrameSource, DEFAULT_FRAME_BUDGET};
pub use trace::{read_traces_jsonl, write_traces_jsonl, AgentTrace, RetrievalRecord, TraceStep};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Materials {
    TextOnly,
    Video { path: String, context: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Video,
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Modality::Text => "text",
            Modality::Video => "video",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid query {id}: {message}")]
pub struct QueryError {
    pub id: String,
    pub message: String,
}

/// One question as the pipeline sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub question: String,
    pub materials: Materials,
    pub options: Vec<LabeledOption>,
    pub ground_truth_close: Option<OptionId>,
    pub ground_truth_open: Option<String>,
}

impl Query {
    /// Checks options are `O1..On` in order with `2 <= n <= 4` and that the
    /// ground truth, if given, is one of them.
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        materials: Materials,
        options: Vec<LabeledOption>,
        ground_truth_close: Option<OptionId>,
        ground_truth_open: Option<String>,
    ) -> Result<Self, QueryError> {
        let id = id.into();
        let fail = |message: String| QueryError {
            id: id.clone(),
            message,
        };
        let question = question.into();
        if question.trim().is_empty() {
            return Err(fail("question is empty".into()));
        }
        if !(2..=4).contains(&options.len()) {
            return Err(fail(format!("expected 2 to 4 options, got {}", options.len())));
        }
        for (i, o) in options.iter().enumerate() {
            if o.id.number() as usize != i + 1 {
                return Err(fail(format!("option {} is labelled {}, expected O{}", i + 1, o.id, i + 1)));
            }
        }
        if let Some(gt) = ground_truth_close {
            if !options.iter().any(|o| o.id == gt) {
                return Err(fail(format!("ground truth {gt} is not an option")));
            }
        }
        if let Materials::Video { path, .. } = &materials {
            if path.trim().is_empty() {
                return Err(fail("video path is empty".into()));
            }
        }
        Ok(Self {
            id,
            question,
            materials,
            options,
            ground_truth_close,
            ground_truth_open,
        })
    }
}

pub fn route(q: &Query) -> Modality {
    match q.materials {
        Materials::Video { .. } => Modality::Video,
        Materials::TextOnly => Modality::Text,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub rule_enabled: bool,
    pub case_enabled: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            rule_enabled: true,
            case_enabled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub k_text: usize,
    pub k_video: usize,
    pub ablation: AblationConfig,
    pub params: GenerationParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k_text: DEFAULT_TOP_K,
            k_video: DEFAULT_TOP_K,
            ablation: AblationConfig::default(),
            params: GenerationParams::default(),
        }
    }
}

/// The backend each agent role talks to.
#[derive(Clone)]
pub struct AgentBackends {
    pub rule: Arc<dyn ChatBackend>,
    pub case: Arc<dyn ChatBackend>,
    pub context: Arc<dyn ChatBackend>,
    pub video: Arc<dyn ChatBackend>,
    pub chief: Arc<dyn ChatBackend>,
}

impl AgentBackends {
    pub fn uniform(backend: Arc<dyn ChatBackend>) -> Self {
        Self {
            rule: backend.clone(),
            case: backend.clone(),
            context: backend.clone(),
            video: backend.clone(),
            chief: backend,
        }
    }

    pub fn get(&self, role: AgentRole) -> &dyn ChatBackend {
        match role {
            AgentRole::Rule => self.rule.as_ref(),
            AgentRole::Case => self.case.as_ref(),
            AgentRole::Context => self.context.as_ref(),
            AgentRole::Video => self.video.as_ref(),
            AgentRole::Chief => self.chief.as_ref(),
        }
    }
}

#[derive(Clone, Default)]
pub struct KnowledgeBases {
    pub rules: Option<Arc<KnowledgeBase>>,
    pub cases: Option<Arc<KnowledgeBase>>,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{question_id}: {message}")]
pub struct PipelineFailure {
    pub question_id: String,
    pub message: String,
    pub trace: Box<AgentTrace>,
}

pub struct Pipeline {
    pub kbs: KnowledgeBases,
    pub backends: AgentBackends,
    pub embedder: Arc<dyn Embedder>,
    pub frames: Arc<dyn FrameSource>,
    pub config: PipelineConfig,
}

/// A chief slot's content for one knowledge agent, owned so the chief can
/// borrow it.
enum Outcome<T> {
    Report(T),
    Disabled,
    Failed(String),
}

impl<T> Outcome<T> {
    fn slot(&self) -> Slot<'_, T> {
        match self {
            Outcome::Report(r) => Slot::Report(r),
            Outcome::Disabled => Slot::Disabled,
            Outcome::Failed(reason) => Slot::Failed(reason),
        }
    }
}

fn skipped<T>(enabled: bool) -> Outcome<T> {
    if enabled {
        Outcome::Failed("skipped: no video analysis to retrieve with".into())
    } else {
        Outcome::Disabled
    }
}

fn ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

fn finish_step<T: Serialize>(
    agent: AgentRole,
    retrieval: Option<RetrievalRecord>,
    run: AgentRun<T>,
    start: Instant,
) -> (TraceStep, Outcome<T>) {
    let (report, error, outcome) = match run.outcome {
        Ok(r) => (
            Some(serde_json::to_value(&r).expect("reports serialize")),
            None,
            Outcome::Report(r),
        ),
        Err(e) => (None, Some(e.to_string()), Outcome::Failed(e.to_string())),
    };
    let step = TraceStep {
        agent,
        retrieval,
        calls: run.calls,
        report,
        error,
        wall_time_ms: ms(start),
    };
    (step, outcome)
}

fn failed_step<T>(agent: AgentRole, retrieval: Option<RetrievalRecord>, message: String, start: Instant) -> (TraceStep, Outcome<T>) {
    let step = TraceStep {
        agent,
        retrieval,
        calls: Vec::new(),
        report: None,
        error: Some(message.clone()),
        wall_time_ms: ms(start),
    };
    (step, Outcome::Failed(message))
}

impl Pipeline {
    pub fn new(
        kbs: KnowledgeBases,
        backends: AgentBackends,
        embedder: Arc<dyn Embedder>,
        frames: Arc<dyn FrameSource>,
        config: PipelineConfig,
    ) -> Self {
        Self {
            kbs,
            backends,
            embedder,
            frames,
            config,
        }
    }

    fn agent_ctx<'a>(&'a self, role: AgentRole, question_id: &'a str) -> AgentContext<'a> {
        AgentContext {
            backend: self.backends.get(role),
            question_id,
            params: self.config.params,
        }
    }

    /// Retrieve from the rules base with `query_text`, then run the rule
    /// agent. `None` when ablated.
    fn rule_step(&self, qid: &str, query_text: &str, k: usize) -> Option<(TraceStep, Outcome<RuleSummary>)> {
        if !self.config.ablation.rule_enabled {
            return None;
        }
        let start = Instant::now();
        let Some(kb) = &self.kbs.rules else {
            return Some(failed_step(AgentRole::Rule, None, "no rules knowledge base loaded".into(), start));
        };
        let mut record = RetrievalRecord {
            kb: KbKind::Rules,
            query_text: query_text.to_string(),
            k,
            hits: Vec::new(),
            error: None,
        };
        match retrieve_top_k(query_text, kb, k, self.embedder.as_ref()) {
            Ok(hits) => record.hits = hits,
            Err(e) => {
                record.error = Some(e.to_string());
                return Some(failed_step(AgentRole::Rule, Some(record), format!("rule retrieval failed: {e}"), start));
            }
        }
        let segments: Vec<&RuleSegment> = record
            .hits
            .iter()
            .filter_map(|h| match &h.entry_ref {
                EntryRef::Segment(id) => kb.rule(id),
                EntryRef::Case(_) => None,
            })
            .collect();
        let run = run_rule_agent(&self.agent_ctx(AgentRole::Rule, qid), query_text, &segments);
        Some(finish_step(AgentRole::Rule, Some(record), run, start))
    }

    fn case_step(&self, qid: &str, query_text: &str, k: usize) -> Option<(TraceStep, Outcome<CaseSummary>)> {
        if !self.config.ablation.case_enabled {
            return None;
        }
        let start = Instant::now();
        let Some(kb) = &self.kbs.cases else {
            return Some(failed_step(AgentRole::Case, None, "no cases knowledge base loaded".into(), start));
        };
        let mut record = RetrievalRecord {
            kb: KbKind::Cases,
            query_text: query_text.to_string(),
            k,
            hits: Vec::new(),
            error: None,
        };
        match retrieve_top_k(query_text, kb, k, self.embedder.as_ref()) {
            Ok(hits) => record.hits = hits,
            Err(e) => {
                record.error = Some(e.to_string());
                return Some(failed_step(AgentRole::Case, Some(record), format!("case retrieval failed: {e}"), start));
            }
        }
        let cases: Vec<&CaseEntry> = record
            .hits
            .iter()
            .filter_map(|h| match h.entry_ref {
                EntryRef::Case(id) => kb.case(id),
                EntryRef::Segment(_) => None,
            })
            .collect();
        let run = run_case_agent(&self.agent_ctx(AgentRole::Case, qid), query_text, &cases);
        Some(finish_step(AgentRole::Case, Some(record), run, start))
    }

    /// Rule and case steps in parallel, in that trace order.
    fn knowledge_steps(
        &self,
        qid: &str,
        query_text: &str,
        k: usize,
        steps: &mut Vec<TraceStep>,
    ) -> (Outcome<RuleSummary>, Outcome<CaseSummary>) {
        let (rule, case) = std::thread::scope(|s| {
            let rule = s.spawn(|| self.rule_step(qid, query_text, k));
            let case = self.case_step(qid, query_text, k);
            (rule.join().expect("rule step panicked"), case)
        });
        let rule = match rule {
            Some((step, o)) => {
                steps.push(step);
                o
            }
            None => Outcome::Disabled,
        };
        let case = match case {
            Some((step, o)) => {
                steps.push(step);
                o
            }
            None => Outcome::Disabled,
        };
        (rule, case)
    }

    fn chief_step(&self, q: &Query, inputs: ChiefInputs<'_>, steps: &mut Vec<TraceStep>) -> Result<Verdict, String> {
        let start = Instant::now();
        let run = run_chief_agent(&self.agent_ctx(AgentRole::Chief, &q.id), &inputs);
        let (step, outcome) = finish_step(AgentRole::Chief, None, run, start);
        steps.push(step);
        match outcome {
            Outcome::Report(v) => Ok(v),
            Outcome::Failed(reason) => Err(reason),
            Outcome::Disabled => unreachable!("the chief is never disabled"),
        }
    }

    fn run_text(&self, q: &Query, steps: &mut Vec<TraceStep>) -> Result<Verdict, String> {
        let (rule, case) = self.knowledge_steps(&q.id, &q.question, self.config.k_text, steps);
        self.chief_step(
            q,
            ChiefInputs {
                question_text: &q.question,
                options: &q.options,
                rule: rule.slot(),
                case: case.slot(),
                context: Slot::NotApplicable,
                video: Slot::NotApplicable,
            },
            steps,
        )
    }

    fn run_video(
        &self,
        q: &Query,
        clip: &str,
        context_str: &str,
        steps: &mut Vec<TraceStep>,
        fallback: &mut bool,
    ) -> Result<Verdict, String> {
        let frames = self.frames.frames(clip).map_err(|e| e.to_string())?;
        let ((video_step, video), (context_step, context)) = std::thread::scope(|s| {
            let video = s.spawn(|| {
                let start = Instant::now();
                let run = run_video_agent(&self.agent_ctx(AgentRole::Video, &q.id), &frames, &q.question, &q.options);
                finish_step::<VideoAnalysis>(AgentRole::Video, None, run, start)
            });
            let start = Instant::now();
            let run = run_context_agent(&self.agent_ctx(AgentRole::Context, &q.id), context_str);
            let context = finish_step::<ContextAnalysis>(AgentRole::Context, None, run, start);
            (video.join().expect("video step panicked"), context)
        });
        steps.push(video_step);
        steps.push(context_step);

        let (rule, case) = match &video {
            Outcome::Report(v) => self.knowledge_steps(&q.id, &v.description, self.config.k_video, steps),
            _ => {
                // Without a description there is nothing to retrieve with.
                *fallback = true;
                (
                    skipped(self.config.ablation.rule_enabled),
                    skipped(self.config.ablation.case_enabled),
                )
            }
        };
        self.chief_step(
            q,
            ChiefInputs {
                question_text: &q.question,
                options: &q.options,
                rule: rule.slot(),
                case: case.slot(),
                context: context.slot(),
                video: video.slot(),
            },
            steps,
        )
    }

    /// Answer `q`. Always returns a trace; `verdict` is `None` when the
    /// question went unanswered, with the reason in `failure`.
    pub fn run(&self, q: &Query) -> AgentTrace {
        let start = Instant::now();
        let modality = route(q);
        let mut steps = Vec::new();
        let mut video_fallback = false;
        let result = match &q.materials {
            Materials::TextOnly => self.run_text(q, &mut steps),
            Materials::Video { path, context } => self.run_video(q, path, context, &mut steps, &mut video_fallback),
        };
        if let Err(reason) = &result {
            tracing::warn!(question = %q.id, %reason, "question unanswered");
        }
        let (verdict, failure) = match result {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e)),
        };
        AgentTrace {
            question_id: q.id.clone(),
            modality,
            steps,
            verdict,
            failure,
            video_fallback,
            wall_time_ms: ms(start),
        }
    }

    /// Like [`Pipeline::run`] but as a `Result`; the trace travels with the
    /// error.
    pub fn run_verdict(&self, q: &Query) -> Result<(Verdict, AgentTrace), PipelineFailure> {
        let trace = self.run(q);
        match &trace.verdict {
            Some(v) => Ok((v.clone(), trace)),
            None => Err(PipelineFailure {
                question_id: q.id.clone(),
                message: trace.failure.clone().unwrap_or_default(),
                trace: Box::new(trace),
            }),
        }
    }
}
