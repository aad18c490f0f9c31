//! Per-question agent traces and their JSONL export.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::Modality;
use crate::agents::{AgentRole, CallRecord, Verdict, VideoAnalysis};
use crate::kb::{KbKind, RetrievalHit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRecord {
    pub kb: KbKind,
    /// The exact text that was embedded as the query.
    pub query_text: String,
    pub k: usize,
    pub hits: Vec<RetrievalHit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub agent: AgentRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<RetrievalRecord>,
    pub calls: Vec<CallRecord>,
    /// The parsed report, present iff the agent succeeded.
    pub report: Option<Value>,
    pub error: Option<String>,
    pub wall_time_ms: u64,
}

impl TraceStep {
    pub fn succeeded(&self) -> bool {
        self.report.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrace {
    pub question_id: String,
    pub modality: Modality,
    pub steps: Vec<TraceStep>,
    pub verdict: Option<Verdict>,
    /// Why the question went unanswered.
    pub failure: Option<String>,
    /// Video mode only: the video agent failed and the chief ran without it.
    #[serde(default)]
    pub video_fallback: bool,
    pub wall_time_ms: u64,
}

impl AgentTrace {
    pub fn step(&self, agent: AgentRole) -> Option<&TraceStep> {
        self.steps.iter().find(|s| s.agent == agent)
    }

    pub fn retrievals(&self) -> impl Iterator<Item = &RetrievalRecord> {
        self.steps.iter().filter_map(|s| s.retrieval.as_ref())
    }

    pub fn retrieval(&self, kb: KbKind) -> Option<&RetrievalRecord> {
        self.retrievals().find(|r| r.kb == kb)
    }

    pub fn call_count(&self) -> usize {
        self.steps.iter().map(|s| s.calls.len()).sum()
    }

    pub fn video_analysis(&self) -> Option<VideoAnalysis> {
        let report = self.step(AgentRole::Video)?.report.clone()?;
        serde_json::from_value(report).ok()
    }

    /// The chief's initial user prompt.
    pub fn chief_prompt(&self) -> Option<&str> {
        self.step(AgentRole::Chief)?
            .calls
            .first()
            .map(|c| c.user_prompt.as_str())
    }

    /// Copy with every timing field zeroed, for determinism comparisons.
    pub fn without_timings(&self) -> AgentTrace {
        let mut t = self.clone();
        t.wall_time_ms = 0;
        for step in &mut t.steps {
            step.wall_time_ms = 0;
            for call in &mut step.calls {
                call.latency_ms = 0;
            }
        }
        t
    }
}

pub fn write_traces_jsonl<'a>(
    path: &Path,
    traces: impl IntoIterator<Item = &'a AgentTrace>,
) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for t in traces {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_traces_jsonl(path: &Path) -> std::io::Result<Vec<AgentTrace>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("{}:{}: {e}", path.display(), n + 1),
            )
        })?;
        out.push(t);
    }
    Ok(out)
}
