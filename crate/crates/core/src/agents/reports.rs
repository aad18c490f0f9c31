//! Typed agent outputs and how each one is written into the chief prompt.

use serde::{Deserialize, Serialize};

use crate::OptionId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConfidenceLevel {
    Low,
    Medium,
    High,
}

impl ConfidenceLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            ConfidenceLevel::Low => "Low",
            ConfidenceLevel::Medium => "Medium",
            ConfidenceLevel::High => "High",
        }
    }

    /// Thirds of `[0, 1]`.
    pub fn from_score(score: f64) -> Self {
        if score < 1.0 / 3.0 {
            ConfidenceLevel::Low
        } else if score < 2.0 / 3.0 {
            ConfidenceLevel::Medium
        } else {
            ConfidenceLevel::High
        }
    }
}

/// The rule agent's confidence, kept as both the ordinal and the numeric
/// score when the model gave one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confidence {
    pub level: ConfidenceLevel,
    pub score: Option<f64>,
}

impl std::fmt::Display for Confidence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.score {
            Some(s) => write!(f, "{} ({s})", self.level.as_str()),
            None => f.write_str(self.level.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSummary {
    pub direct_quote: String,
    pub key_terminology_match: String,
    pub confidence: Confidence,
    pub raw: String,
}

impl RuleSummary {
    pub fn slot_text(&self) -> String {
        format!(
            "Text of Law: {}\nMatch Logic: {}\nConfidence: {}",
            self.direct_quote, self.key_terminology_match, self.confidence
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub summary: String,
    pub cited_case_ids: Vec<u32>,
    pub raw: String,
}

impl CaseSummary {
    pub fn slot_text(&self) -> String {
        let status = if self.cited_case_ids.is_empty() {
            "No Precedent".to_string()
        } else {
            let ids: Vec<String> = self.cited_case_ids.iter().map(|id| format!("#{id}")).collect();
            format!("Valid Precedent (cases {})", ids.join(", "))
        };
        format!("{}\nPrecedent status: {status}", self.summary)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strictness {
    Lenient,
    Normal,
    Strict,
}

impl Strictness {
    pub fn as_str(self) -> &'static str {
        match self {
            Strictness::Lenient => "Lenient",
            Strictness::Normal => "Normal",
            Strictness::Strict => "Strict",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Strictness::Lenient, Strictness::Normal, Strictness::Strict]
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextAnalysis {
    pub strictness: Strictness,
    pub analysis: String,
    pub raw: String,
}

impl ContextAnalysis {
    pub fn slot_text(&self) -> String {
        format!("Strictness: {}\nAnalysis: {}", self.strictness.as_str(), self.analysis)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoAnalysis {
    /// What the frames show: actions, contact point, intensity.
    pub description: String,
    pub recommended_option: OptionId,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: OptionId,
    pub explanation: String,
    pub raw: String,
}
