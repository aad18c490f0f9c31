use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::parse::{
    parse_case_summary, parse_context_analysis, parse_rule_summary, parse_verdict,
    parse_video_analysis,
};
use super::prompt::{render_prompt, PromptError, RenderedPrompt};
use super::reports::{CaseSummary, ContextAnalysis, RuleSummary, Verdict, VideoAnalysis};
use super::AgentRole;
use crate::backends::{
    complete_chat, BackendError, ChatBackend, ChatRequest, GenerationParams, ImagePayload,
    RETRY_SUFFIX,
};
use crate::choice::format_options;
use crate::kb::{CaseEntry, RuleSegment};
use crate::LabeledOption;

/// One initial call plus one re-prompt.
pub const MAX_CALLS_PER_AGENT: usize = 2;

/// Every unavailable chief slot starts with this text.
pub const NOT_AVAILABLE: &str = "[not available";

const JSON_REMINDER: &str = "\n\nReminder: reply with ONE JSON object containing exactly the fields listed under the expected output, and nothing else.";
const CHIEF_REMINDER: &str = "\n\nReminder: reply in exactly this format, with one option ID from the list:\nPrediction: [Option ID]\nExplanation: [Reasoning]";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("{agent} agent precondition failed: {message}")]
    Precondition { agent: AgentRole, message: String },
    #[error("{agent} agent backend call failed: {source}")]
    Backend {
        agent: AgentRole,
        #[source]
        source: BackendError,
    },
    #[error("{agent} agent produced unusable output: {reason}")]
    Output {
        agent: AgentRole,
        reason: String,
        raw: String,
    },
    #[error(transparent)]
    Template(#[from] PromptError),
}

/// One backend call as it appears in a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub request_tag: String,
    pub backend_id: String,
    pub system_prompt: String,
    pub user_prompt: String,
    pub attachments: usize,
    pub response: Option<String>,
    pub error: Option<String>,
    pub latency_ms: u64,
}

/// What an agent invocation did, successful or not.
#[derive(Debug, Clone)]
pub struct AgentRun<T> {
    pub calls: Vec<CallRecord>,
    pub outcome: Result<T, AgentError>,
}

impl<T> AgentRun<T> {
    fn early(err: AgentError) -> Self {
        Self {
            calls: Vec::new(),
            outcome: Err(err),
        }
    }
}

pub struct AgentContext<'a> {
    pub backend: &'a dyn ChatBackend,
    pub question_id: &'a str,
    pub params: GenerationParams,
}

impl AgentContext<'_> {
    fn tag(&self, role: AgentRole) -> String {
        format!("{}/{role}", self.question_id)
    }
}

fn call_once(
    ctx: &AgentContext<'_>,
    role: AgentRole,
    tag: String,
    prompt: &RenderedPrompt,
    user: &str,
    attachments: &[ImagePayload],
    calls: &mut Vec<CallRecord>,
) -> Result<String, AgentError> {
    let req = ChatRequest::new(role.as_str(), tag, prompt.system.clone(), user)
        .with_attachments(attachments.to_vec())
        .with_params(ctx.params);
    let res = complete_chat(ctx.backend, &req);
    let mut record = CallRecord {
        request_tag: req.request_tag,
        backend_id: ctx.backend.id().to_string(),
        system_prompt: req.system_prompt,
        user_prompt: req.user_prompt,
        attachments: attachments.len(),
        response: None,
        error: None,
        latency_ms: 0,
    };
    let out = match res {
        Ok(r) => {
            record.latency_ms = r.latency.as_millis() as u64;
            record.response = Some(r.text.clone());
            Ok(r.text)
        }
        Err(e) => {
            record.error = Some(e.to_string());
            Err(AgentError::Backend {
                agent: role,
                source: e,
            })
        }
    };
    calls.push(record);
    out
}

/// Call, parse, and on a parse failure re-prompt once with `reminder`
/// appended. Backend errors are not re-prompted.
fn converse<T>(
    ctx: &AgentContext<'_>,
    role: AgentRole,
    prompt: RenderedPrompt,
    attachments: &[ImagePayload],
    reminder: &str,
    parse: impl Fn(&str) -> Result<T, String>,
) -> AgentRun<T> {
    let mut calls = Vec::new();
    let tag = ctx.tag(role);
    let outcome = (|| {
        let raw = call_once(ctx, role, tag.clone(), &prompt, &prompt.user, attachments, &mut calls)?;
        if let Ok(v) = parse(&raw) {
            return Ok(v);
        }
        tracing::debug!(%tag, "unparseable reply, re-prompting");
        let user = format!("{}{reminder}", prompt.user);
        let raw = call_once(
            ctx,
            role,
            format!("{tag}{RETRY_SUFFIX}"),
            &prompt,
            &user,
            attachments,
            &mut calls,
        )?;
        parse(&raw).map_err(|reason| AgentError::Output {
            agent: role,
            reason,
            raw,
        })
    })();
    AgentRun { calls, outcome }
}

fn values<const N: usize>(pairs: [(&'static str, String); N]) -> BTreeMap<&'static str, String> {
    pairs.into_iter().collect()
}

/// `[Page N | segment_id]` header then the page text, blank line between.
pub fn format_retrieved_rules(rules: &[&RuleSegment]) -> String {
    rules
        .iter()
        .map(|r| format!("[Page {} | {}]\n{}", r.page_number, r.segment_id, r.text))
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn format_retrieved_cases(cases: &[&CaseEntry]) -> String {
    cases
        .iter()
        .map(|c| {
            format!(
                "[Case #{} | {} | {}]\nCase: {}\nDecision: {}",
                c.id,
                c.source.as_str(),
                c.controversiality.as_str(),
                c.case_description,
                c.decision
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn run_rule_agent(
    ctx: &AgentContext<'_>,
    query_text: &str,
    rules: &[&RuleSegment],
) -> AgentRun<RuleSummary> {
    if rules.is_empty() {
        return AgentRun::early(AgentError::Precondition {
            agent: AgentRole::Rule,
            message: "no retrieved rule segments".into(),
        });
    }
    let prompt = match render_prompt(
        AgentRole::Rule.template(),
        &values([
            ("retrieved_rules", format_retrieved_rules(rules)),
            ("query_text", query_text.to_string()),
        ]),
    ) {
        Ok(p) => p,
        Err(e) => return AgentRun::early(e.into()),
    };
    converse(ctx, AgentRole::Rule, prompt, &[], JSON_REMINDER, parse_rule_summary)
}

pub fn run_case_agent(
    ctx: &AgentContext<'_>,
    query_text: &str,
    cases: &[&CaseEntry],
) -> AgentRun<CaseSummary> {
    if cases.is_empty() {
        return AgentRun::early(AgentError::Precondition {
            agent: AgentRole::Case,
            message: "no retrieved cases".into(),
        });
    }
    let allowed: BTreeSet<u32> = cases.iter().map(|c| c.id).collect();
    let prompt = match render_prompt(
        AgentRole::Case.template(),
        &values([
            ("retrieved_cases", format_retrieved_cases(cases)),
            ("query_text", query_text.to_string()),
        ]),
    ) {
        Ok(p) => p,
        Err(e) => return AgentRun::early(e.into()),
    };
    converse(ctx, AgentRole::Case, prompt, &[], JSON_REMINDER, |raw| {
        parse_case_summary(raw, &allowed)
    })
}

pub fn run_context_agent(ctx: &AgentContext<'_>, context_str: &str) -> AgentRun<ContextAnalysis> {
    if context_str.trim().is_empty() {
        return AgentRun::early(AgentError::Precondition {
            agent: AgentRole::Context,
            message: "empty match context".into(),
        });
    }
    let prompt = match render_prompt(
        AgentRole::Context.template(),
        &values([("context_str", context_str.to_string())]),
    ) {
        Ok(p) => p,
        Err(e) => return AgentRun::early(e.into()),
    };
    converse(ctx, AgentRole::Context, prompt, &[], JSON_REMINDER, parse_context_analysis)
}

pub fn run_video_agent(
    ctx: &AgentContext<'_>,
    frames: &[ImagePayload],
    question_text: &str,
    options: &[LabeledOption],
) -> AgentRun<VideoAnalysis> {
    if frames.is_empty() {
        return AgentRun::early(AgentError::Precondition {
            agent: AgentRole::Video,
            message: "no video frames".into(),
        });
    }
    let prompt = match render_prompt(
        AgentRole::Video.template(),
        &values([
            ("question_text", question_text.to_string()),
            ("options_str", format_options(options)),
        ]),
    ) {
        Ok(p) => p,
        Err(e) => return AgentRun::early(e.into()),
    };
    converse(ctx, AgentRole::Video, prompt, frames, JSON_REMINDER, |raw| {
        parse_video_analysis(raw, options)
    })
}

/// A chief input slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slot<'a, T> {
    Report(&'a T),
    /// The slot does not apply to this modality.
    NotApplicable,
    /// Switched off by an ablation.
    Disabled,
    /// The upstream agent or its retrieval failed.
    Failed(&'a str),
}

impl<T> Slot<'_, T> {
    fn render(&self, text: impl Fn(&T) -> String) -> String {
        match self {
            Slot::Report(r) => text(r),
            Slot::NotApplicable => format!("{NOT_AVAILABLE}]"),
            Slot::Disabled => format!("{NOT_AVAILABLE}: disabled for this run]"),
            Slot::Failed(reason) => {
                let one_line = reason.split_whitespace().collect::<Vec<_>>().join(" ");
                format!("{NOT_AVAILABLE}: {one_line}]")
            }
        }
    }
}

pub struct ChiefInputs<'a> {
    pub question_text: &'a str,
    pub options: &'a [LabeledOption],
    pub rule: Slot<'a, RuleSummary>,
    pub case: Slot<'a, CaseSummary>,
    pub context: Slot<'a, ContextAnalysis>,
    pub video: Slot<'a, VideoAnalysis>,
}

pub fn render_chief_prompt(inputs: &ChiefInputs<'_>) -> Result<RenderedPrompt, PromptError> {
    render_prompt(
        AgentRole::Chief.template(),
        &values([
            ("question_text", inputs.question_text.to_string()),
            ("options_text", format_options(inputs.options)),
            ("rule_str_placeholder", inputs.rule.render(RuleSummary::slot_text)),
            ("case_str_placeholder", inputs.case.render(CaseSummary::slot_text)),
            ("context_analysis", inputs.context.render(ContextAnalysis::slot_text)),
            ("desc", inputs.video.render(|v| v.description.clone())),
            ("pred", inputs.video.render(|v| v.recommended_option.to_string())),
        ]),
    )
}

pub fn run_chief_agent(ctx: &AgentContext<'_>, inputs: &ChiefInputs<'_>) -> AgentRun<Verdict> {
    if inputs.question_text.trim().is_empty() || inputs.options.is_empty() {
        return AgentRun::early(AgentError::Precondition {
            agent: AgentRole::Chief,
            message: "question and options are required".into(),
        });
    }
    let prompt = match render_chief_prompt(inputs) {
        Ok(p) => p,
        Err(e) => return AgentRun::early(e.into()),
    };
    converse(ctx, AgentRole::Chief, prompt, &[], CHIEF_REMINDER, |raw| {
        parse_verdict(raw, inputs.options)
    })
}
