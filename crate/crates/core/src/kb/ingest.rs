use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    CaseEntry, CaseSource, Controversiality, EmbeddingVector, KbError, KnowledgeBase, RuleSegment,
};
use crate::backends::{embed_text, Embedder};

/// An input page or record that was skipped during ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 0-based position in the input.
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

/// Read law pages in order.
///
/// `path` is either a directory of `page_NNN.txt` files (ordered by page
/// number) or a line-delimited JSON file with one `{"page", "text"}` record
/// per line (ordered by `page`).
pub fn load_rule_pages(path: &Path) -> Result<Vec<String>, KbError> {
    let io = |source| KbError::Io {
        path: path.display().to_string(),
        source,
    };
    if path.as_os_str().is_empty() {
        return Err(io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            "empty path",
        )));
    }
    let meta = fs::metadata(path).map_err(io)?;
    if meta.is_dir() {
        static PAGE_FILE: OnceLock<Regex> = OnceLock::new();
        let re = PAGE_FILE.get_or_init(|| Regex::new(r"^page_(\d+)\.txt$").unwrap());
        let mut pages = Vec::new();
        for entry in fs::read_dir(path).map_err(io)? {
            let entry = entry.map_err(io)?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(c) = re.captures(&name) {
                let n: u64 = c[1].parse().map_err(|_| KbError::Parse {
                    path: name.clone(),
                    message: "page number out of range".into(),
                })?;
                pages.push((n, entry.path()));
            }
        }
        pages.sort();
        pages
            .into_iter()
            .map(|(_, p)| {
                fs::read_to_string(&p).map_err(|source| KbError::Io {
                    path: p.display().to_string(),
                    source,
                })
            })
            .collect()
    } else {
        #[derive(Deserialize)]
        struct PageRecord {
            page: u32,
            text: String,
        }
        let raw = fs::read_to_string(path).map_err(io)?;
        let mut records = Vec::new();
        for (line_no, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: PageRecord = serde_json::from_str(line).map_err(|e| KbError::Parse {
                path: path.display().to_string(),
                message: format!("line {}: {e}", line_no + 1),
            })?;
            records.push(rec);
        }
        records.sort_by_key(|r| r.page);
        if let Some(w) = records.windows(2).find(|w| w[0].page == w[1].page) {
            return Err(KbError::Parse {
                path: path.display().to_string(),
                message: format!("duplicate page {}", w[0].page),
            });
        }
        Ok(records.into_iter().map(|r| r.text).collect())
    }
}

fn slug(s: &str) -> String {
    let mut out = String::new();
    for ch in s.chars() {
        if ch.is_ascii_alphanumeric() {
            out.push(ch.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

fn embed_all(
    texts: &[&str],
    embedder: &dyn Embedder,
    parallelism: usize,
) -> Result<Vec<EmbeddingVector>, KbError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| KbError::Invalid(format!("thread pool: {e}")))?;
    // par_iter().collect() keeps input order.
    let results: Vec<_> =
        pool.install(|| texts.par_iter().map(|t| embed_text(embedder, t)).collect());
    results
        .into_iter()
        .map(|r| r.map_err(KbError::from))
        .collect()
}

/// Build the law base: one segment per page, numbered from 1 in input order.
///
/// Empty pages are rejected individually and keep their page number slot.
/// `metadata` must carry an `edition` label and is copied onto every
/// segment.
pub fn ingest_rule_pages(
    pages: &[String],
    metadata: &BTreeMap<String, String>,
    embedder: &dyn Embedder,
    parallelism: usize,
) -> Result<(KnowledgeBase, IngestReport), KbError> {
    let edition = metadata
        .get("edition")
        .filter(|e| !e.trim().is_empty())
        .ok_or_else(|| KbError::Invalid("rule metadata must include an `edition` label".into()))?;
    if pages.is_empty() {
        return Err(KbError::Invalid("no pages to ingest".into()));
    }
    let prefix = match metadata.get("source") {
        Some(src) => format!("{}-{}", slug(src), slug(edition)),
        None => slug(edition),
    };

    let mut report = IngestReport::default();
    let mut accepted = Vec::new();
    for (i, text) in pages.iter().enumerate() {
        if text.trim().is_empty() {
            report.rejected.push(Rejection {
                index: i,
                reason: format!("page {} is empty", i + 1),
            });
        } else {
            accepted.push((i, text.as_str()));
        }
    }
    if accepted.is_empty() {
        return Err(KbError::NothingIngested(report));
    }

    let texts: Vec<&str> = accepted.iter().map(|(_, t)| *t).collect();
    let embeddings = embed_all(&texts, embedder, parallelism)?;
    let segments: Vec<RuleSegment> = accepted
        .into_iter()
        .zip(embeddings)
        .map(|((i, text), embedding)| {
            let page_number = (i + 1) as u32;
            RuleSegment {
                segment_id: format!("{prefix}-p{page_number:04}"),
                page_number,
                text: text.to_string(),
                metadata: metadata.clone(),
                embedding,
            }
        })
        .collect();
    report.accepted = segments.len();
    let kb = KnowledgeBase::from_rules(segments, embedder.fingerprint())?;
    Ok((kb, report))
}

/// Text that gets embedded for a case: description fused with decision.
pub fn fused_case_text(case_description: &str, decision: &str) -> String {
    format!("Case: {case_description}\nDecision: {decision}")
}

/// Competition named in a description such as
/// `"2024 Premier League: Declan Rice ..."`.
pub fn infer_case_source(case_description: &str) -> Option<CaseSource> {
    static PREFIX: OnceLock<Regex> = OnceLock::new();
    let re = PREFIX.get_or_init(|| Regex::new(r"^\s*(?:\d{4}(?:/\d{2,4})?\s+)?([^:]+):").unwrap());
    let comp = re.captures(case_description)?[1].trim().to_lowercase();
    let has = |needle: &str| comp.contains(needle);
    if has("world cup") {
        Some(CaseSource::WorldCup)
    } else if has("premier league") || comp == "epl" {
        Some(CaseSource::PremierLeague)
    } else if has("champions league") || comp == "ucl" {
        Some(CaseSource::ChampionsLeague)
    } else if has("bundesliga") {
        Some(CaseSource::Bundesliga)
    } else if has("la liga") || has("laliga") {
        Some(CaseSource::LaLiga)
    } else if comp == "euro" || has("euro cup") || has("euros") || has("european championship") {
        Some(CaseSource::EuroCup)
    } else {
        None
    }
}

/// Read the case file: a JSON array of records.
pub fn load_case_records(path: &Path) -> Result<Vec<Value>, KbError> {
    let raw = fs::read_to_string(path).map_err(|source| KbError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&raw).map_err(|e| KbError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

struct ValidCase {
    id: u32,
    case: String,
    decision: String,
    controversiality: Controversiality,
    source: CaseSource,
}

fn validate_case(record: &Value) -> Result<ValidCase, String> {
    let obj = record.as_object().ok_or("record is not an object")?;
    let text = |field: &str| -> Result<String, String> {
        match obj.get(field) {
            None => Err(format!("missing field `{field}`")),
            Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
            Some(Value::String(_)) => Err(format!("field `{field}` is empty")),
            Some(_) => Err(format!("field `{field}` must be a string")),
        }
    };
    let id = match obj.get("id") {
        None => return Err("missing field `id`".into()),
        Some(v) => v
            .as_u64()
            .filter(|&n| n > 0 && n <= u32::MAX as u64)
            .ok_or("field `id` must be a positive integer")? as u32,
    };
    let case = text("case")?;
    let decision = text("decision")?;
    let c = text("controversiality")?;
    let controversiality = Controversiality::parse(&c)
        .ok_or_else(|| format!("unknown controversiality {c:?}"))?;
    let source = match obj.get("source") {
        Some(Value::String(s)) => CaseSource::ALL
            .into_iter()
            .find(|src| src.as_str() == s)
            .ok_or_else(|| format!("unknown source {s:?}"))?,
        Some(_) => return Err("field `source` must be a string".into()),
        None => infer_case_source(&case)
            .ok_or_else(|| "cannot determine the competition from `case`".to_string())?,
    };
    Ok(ValidCase {
        id,
        case,
        decision,
        controversiality,
        source,
    })
}

/// Build the case base from raw records (`id`, `case`, `decision`,
/// `controversiality`, optional `source`).
///
/// Invalid records are rejected individually; a duplicate id is a hard
/// error. An empty record list yields an empty base.
pub fn ingest_cases(
    records: &[Value],
    embedder: &dyn Embedder,
    parallelism: usize,
) -> Result<(KnowledgeBase, IngestReport), KbError> {
    let mut report = IngestReport::default();
    let mut valid = Vec::new();
    let mut seen = HashSet::new();
    for (i, r) in records.iter().enumerate() {
        match validate_case(r) {
            Ok(c) => {
                if !seen.insert(c.id) {
                    return Err(KbError::DuplicateCaseId(c.id));
                }
                valid.push(c);
            }
            Err(reason) => report.rejected.push(Rejection { index: i, reason }),
        }
    }
    if valid.is_empty() && !records.is_empty() {
        return Err(KbError::NothingIngested(report));
    }

    let fused: Vec<String> = valid
        .iter()
        .map(|c| fused_case_text(&c.case, &c.decision))
        .collect();
    let texts: Vec<&str> = fused.iter().map(String::as_str).collect();
    let embeddings = embed_all(&texts, embedder, parallelism)?;
    let entries: Vec<CaseEntry> = valid
        .into_iter()
        .zip(embeddings)
        .map(|(c, embedding)| CaseEntry {
            id: c.id,
            case_description: c.case,
            decision: c.decision,
            controversiality: c.controversiality,
            source: c.source,
            embedding,
        })
        .collect();
    report.accepted = entries.len();
    let kb = KnowledgeBase::from_cases(entries, embedder.fingerprint())?;
    Ok((kb, report))
}
