//! The five specialist agents: prompt rendering, backend calls and strict
//! parsing of each reply.

pub mod parse;
pub mod prompt;
pub mod reports;
mod run;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use prompt::{render_prompt, PromptError, RenderedPrompt, TemplateId};
pub use reports::{
    CaseSummary, Confidence, ConfidenceLevel, ContextAnalysis, RuleSummary, Strictness, Verdict,
    VideoAnalysis,
};
pub use run::{
    format_retrieved_cases, format_retrieved_rules, render_chief_prompt, run_case_agent,
    run_chief_agent, run_context_agent, run_rule_agent, run_video_agent, AgentContext, AgentError,
    AgentRun, CallRecord, ChiefInputs, Slot, MAX_CALLS_PER_AGENT, NOT_AVAILABLE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRole {
    Rule,
    Case,
    Context,
    Video,
    Chief,
}

impl AgentRole {
    pub const ALL: [AgentRole; 5] = [
        AgentRole::Rule,
        AgentRole::Case,
        AgentRole::Context,
        AgentRole::Video,
        AgentRole::Chief,
    ];

    pub fn as_str(self) -> &'static str {
        self.template().as_str()
    }

    pub fn template(self) -> TemplateId {
        match self {
            AgentRole::Rule => TemplateId::Rule,
            AgentRole::Case => TemplateId::Case,
            AgentRole::Context => TemplateId::Context,
            AgentRole::Video => TemplateId::Video,
            AgentRole::Chief => TemplateId::Chief,
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
