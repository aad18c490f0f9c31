//! Prompt templates and `{placeholder}` rendering.
//!
//! Templates are the text fixtures under `prompts/`, one system and one user
//! file per agent. A placeholder is `{name}` with `name` made of lowercase
//! letters, digits and underscores; any other brace (such as the JSON
//! example in the video prompt) is literal text.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateId {
    Rule,
    Case,
    Context,
    Video,
    Chief,
}

impl TemplateId {
    pub const ALL: [TemplateId; 5] = [
        TemplateId::Rule,
        TemplateId::Case,
        TemplateId::Context,
        TemplateId::Video,
        TemplateId::Chief,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Rule => "rule",
            TemplateId::Case => "case",
            TemplateId::Context => "context",
            TemplateId::Video => "video",
            TemplateId::Chief => "chief",
        }
    }

    pub fn template(self) -> Template {
        let (system, user) = match self {
            TemplateId::Rule => (
                include_str!("../../prompts/rule_system.txt"),
                include_str!("../../prompts/rule_user.txt"),
            ),
            TemplateId::Case => (
                include_str!("../../prompts/case_system.txt"),
                include_str!("../../prompts/case_user.txt"),
            ),
            TemplateId::Context => (
                include_str!("../../prompts/context_system.txt"),
                include_str!("../../prompts/context_user.txt"),
            ),
            TemplateId::Video => (
                include_str!("../../prompts/video_system.txt"),
                include_str!("../../prompts/video_user.txt"),
            ),
            TemplateId::Chief => (
                include_str!("../../prompts/chief_system.txt"),
                include_str!("../../prompts/chief_user.txt"),
            ),
        };
        Template {
            system: strip_final_newline(system),
            user: strip_final_newline(user),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn strip_final_newline(s: &'static str) -> &'static str {
    s.strip_suffix('\n').unwrap_or(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub system: &'static str,
    pub user: &'static str,
}

impl Template {
    /// Placeholder names used by either half, sorted.
    pub fn placeholders(&self) -> BTreeSet<&'static str> {
        placeholder_re()
            .captures_iter(self.system)
            .chain(placeholder_re().captures_iter(self.user))
            .map(|c| c.get(1).unwrap().as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{template} template is missing values for: {}", .missing.join(", "))]
pub struct PromptError {
    pub template: TemplateId,
    pub missing: Vec<String>,
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_][a-z0-9_]*)\}").unwrap())
}

/// Single pass: substituted values are inserted verbatim and never scanned
/// for placeholders themselves.
fn fill(text: &str, values: &BTreeMap<&str, String>) -> String {
    placeholder_re()
        .replace_all(text, |c: &regex::Captures<'_>| values[&c[1]].clone())
        .into_owned()
}

/// Render `id` with `values`. Every placeholder must have a value; extra
/// keys are ignored.
pub fn render_prompt(
    id: TemplateId,
    values: &BTreeMap<&str, String>,
) -> Result<RenderedPrompt, PromptError> {
    let template = id.template();
    let missing: Vec<String> = template
        .placeholders()
        .into_iter()
        .filter(|p| !values.contains_key(p))
        .map(str::to_string)
        .collect();
    if !missing.is_empty() {
        return Err(PromptError {
            template: id,
            missing,
        });
    }
    Ok(RenderedPrompt {
        system: fill(template.system, values),
        user: fill(template.user, values),
    })
}

/// True if `text` still contains a `{placeholder}`.
pub fn has_placeholder(text: &str) -> bool {
    placeholder_re().is_match(text)
}
