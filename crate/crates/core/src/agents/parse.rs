//! Strict parsers for agent replies. Each returns a typed report or a
//! reason string; the caller attaches the raw text.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde_json::{Map, Value};

use super::reports::{
    CaseSummary, Confidence, ConfidenceLevel, ContextAnalysis, RuleSummary, Strictness, Verdict,
    VideoAnalysis,
};
use crate::{LabeledOption, OptionId};

/// End offset (exclusive) of the balanced object starting at `start`.
fn balanced_end(text: &str, start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, b) in text.bytes().enumerate().skip(start) {
        if in_str {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// First balanced `{...}` in `text` that parses as a JSON object. Tolerates
/// code fences and surrounding prose.
pub fn extract_json_object(text: &str) -> Option<Map<String, Value>> {
    text.match_indices('{').find_map(|(start, _)| {
        let end = balanced_end(text, start)?;
        match serde_json::from_str::<Value>(&text[start..end]) {
            Ok(Value::Object(m)) => Some(m),
            _ => None,
        }
    })
}

fn object(raw: &str) -> Result<Map<String, Value>, String> {
    extract_json_object(raw).ok_or_else(|| "reply contains no JSON object".to_string())
}

fn text_field(obj: &Map<String, Value>, field: &str) -> Result<String, String> {
    match obj.get(field) {
        None | Some(Value::Null) => Err(format!("missing field `{field}`")),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Array(items)) if items.iter().all(Value::is_string) => Ok(items
            .iter()
            .filter_map(Value::as_str)
            .collect::<Vec<_>>()
            .join("; ")),
        Some(_) => Err(format!("field `{field}` must be text")),
    }
}

fn nonempty_text_field(obj: &Map<String, Value>, field: &str) -> Result<String, String> {
    let s = text_field(obj, field)?;
    if s.trim().is_empty() {
        Err(format!("field `{field}` is empty"))
    } else {
        Ok(s)
    }
}

fn parse_confidence(v: Option<&Value>) -> Result<Confidence, String> {
    let score = |x: f64| {
        if (0.0..=1.0).contains(&x) {
            Ok(Confidence {
                level: ConfidenceLevel::from_score(x),
                score: Some(x),
            })
        } else {
            Err(format!("confidence {x} is outside [0, 1]"))
        }
    };
    match v {
        None | Some(Value::Null) => Err("missing field `confidence`".into()),
        Some(Value::Number(n)) => score(n.as_f64().unwrap_or(f64::NAN)),
        Some(Value::String(s)) => {
            let t = s.trim();
            match t.to_ascii_lowercase().as_str() {
                "low" => Ok(Confidence { level: ConfidenceLevel::Low, score: None }),
                "medium" => Ok(Confidence { level: ConfidenceLevel::Medium, score: None }),
                "high" => Ok(Confidence { level: ConfidenceLevel::High, score: None }),
                _ => match t.parse::<f64>() {
                    Ok(x) => score(x),
                    Err(_) => Err(format!("unrecognised confidence {s:?}")),
                },
            }
        }
        Some(_) => Err("field `confidence` must be a number or low/medium/high".into()),
    }
}

pub fn parse_rule_summary(raw: &str) -> Result<RuleSummary, String> {
    let obj = object(raw)?;
    Ok(RuleSummary {
        direct_quote: text_field(&obj, "direct_quote")?,
        key_terminology_match: text_field(&obj, "key_terminology_match")?,
        confidence: parse_confidence(obj.get("confidence"))?,
        raw: raw.to_string(),
    })
}

fn case_id(v: &Value) -> Option<u32> {
    match v {
        Value::Number(n) => n.as_u64().and_then(|n| u32::try_from(n).ok()),
        Value::String(s) => s.trim().trim_start_matches('#').parse().ok(),
        _ => None,
    }
}

/// `allowed` is the set of case ids that were in the prompt.
pub fn parse_case_summary(raw: &str, allowed: &BTreeSet<u32>) -> Result<CaseSummary, String> {
    let obj = object(raw)?;
    let summary = nonempty_text_field(&obj, "summary")?;
    let ids = match obj.get("cited_case_ids") {
        None | Some(Value::Null) => return Err("missing field `cited_case_ids`".into()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| case_id(v).ok_or_else(|| format!("invalid case id {v}")))
            .collect::<Result<Vec<u32>, String>>()?,
        Some(_) => return Err("field `cited_case_ids` must be a list".into()),
    };
    let mut cited = Vec::new();
    for id in ids {
        if !allowed.contains(&id) {
            return Err(format!("cited case {id} was not among the retrieved cases"));
        }
        if !cited.contains(&id) {
            cited.push(id);
        }
    }
    Ok(CaseSummary {
        summary,
        cited_case_ids: cited,
        raw: raw.to_string(),
    })
}

pub fn parse_context_analysis(raw: &str) -> Result<ContextAnalysis, String> {
    let obj = object(raw)?;
    let s = text_field(&obj, "strictness")?;
    let strictness = Strictness::parse(&s)
        .ok_or_else(|| format!("strictness {s:?} is not one of Lenient, Normal, Strict"))?;
    Ok(ContextAnalysis {
        strictness,
        analysis: text_field(&obj, "analysis")?,
        raw: raw.to_string(),
    })
}

fn option_in(label: &str, options: &[LabeledOption]) -> Result<OptionId, String> {
    let id: OptionId = label
        .trim()
        .trim_matches(|c| c == '[' || c == ']')
        .parse()
        .map_err(|_| format!("{label:?} is not an option label"))?;
    if options.iter().any(|o| o.id == id) {
        Ok(id)
    } else {
        Err(format!("{id} is not one of the offered options"))
    }
}

pub fn parse_video_analysis(raw: &str, options: &[LabeledOption]) -> Result<VideoAnalysis, String> {
    let obj = object(raw)?;
    let description = nonempty_text_field(&obj, "choice_explanation")?;
    let label = text_field(&obj, "predicted_option")?;
    Ok(VideoAnalysis {
        description,
        recommended_option: option_in(&label, options)?,
        raw: raw.to_string(),
    })
}

fn prediction_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?im)^[ \t>#*_-]*prediction[ \t*_]*:[ \t*_]*\[?[ \t]*(O\d+)\b").unwrap()
    })
}

fn explanation_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^[ \t>#*_-]*explanation[ \t*_]*:[ \t*_]*").unwrap())
}

/// Parse the chief's `Prediction: <id>` / `Explanation: <text>` reply.
/// Labels are case-insensitive; the explanation runs to the end of the text.
pub fn parse_verdict(raw: &str, options: &[LabeledOption]) -> Result<Verdict, String> {
    let pred = prediction_re()
        .captures(raw)
        .ok_or("reply has no `Prediction:` line")?;
    let decision = option_in(&pred[1], options)?;
    let m = explanation_re()
        .find(raw)
        .ok_or("reply has no `Explanation:` line")?;
    let explanation = raw[m.end()..].trim().to_string();
    if explanation.is_empty() {
        return Err("explanation is empty".into());
    }
    Ok(Verdict {
        decision,
        explanation,
        raw: raw.to_string(),
    })
}
