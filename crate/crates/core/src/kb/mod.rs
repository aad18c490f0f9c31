//! Vector knowledge bases: law pages (`rules`) and historical incidents
//! (`cases`).
//!
//! A [`KnowledgeBase`] is immutable once built, so it can be shared across
//! threads behind an `Arc` with no locking. Retrieval is an exact scan; the
//! corpora here (one rulebook, a few hundred cases) do not need an
//! approximate index.

mod index;
mod ingest;
mod vector;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{embed_text, BackendError, Embedder};

pub use index::{load_index, load_index_for, save_index, INDEX_FORMAT_VERSION};
pub use ingest::{
    fused_case_text, infer_case_source, ingest_cases, ingest_rule_pages, load_case_records,
    load_rule_pages, IngestReport, Rejection,
};
pub use vector::{cosine_similarity, EmbeddingVector, VectorError};

/// Default number of hits handed to the rule and case agents.
pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("knowledge base is empty")]
    EmptyKnowledgeBase,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("stale index: {0}")]
    Stale(String),
    #[error("invalid knowledge base: {0}")]
    Invalid(String),
    #[error(transparent)]
    Vector(#[from] VectorError),
    #[error("embedding failed: {0}")]
    Embedding(#[from] BackendError),
    #[error("ingestion produced no entries ({} rejected)", .0.rejected.len())]
    NothingIngested(IngestReport),
    #[error("duplicate case id {0}")]
    DuplicateCaseId(u32),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: parse error: {message}")]
    Parse { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KbKind {
    Rules,
    Cases,
}

impl fmt::Display for KbKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KbKind::Rules => "rules",
            KbKind::Cases => "cases",
        })
    }
}

/// One page of the law book.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSegment {
    pub segment_id: String,
    pub page_number: u32,
    pub text: String,
    pub metadata: BTreeMap<String, String>,
    pub embedding: EmbeddingVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Controversiality {
    #[serde(rename = "Non-controversial")]
    Non,
    #[serde(rename = "Somewhat controversial")]
    Somewhat,
    #[serde(rename = "Highly controversial")]
    Highly,
}

impl Controversiality {
    pub fn as_str(self) -> &'static str {
        match self {
            Controversiality::Non => "Non-controversial",
            Controversiality::Somewhat => "Somewhat controversial",
            Controversiality::Highly => "Highly controversial",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Non, Self::Somewhat, Self::Highly]
            .into_iter()
            .find(|c| c.as_str() == s)
    }
}

/// Competition a historical case comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaseSource {
    #[serde(rename = "FIFA World Cup")]
    WorldCup,
    #[serde(rename = "Premier League")]
    PremierLeague,
    #[serde(rename = "UEFA Champions League")]
    ChampionsLeague,
    #[serde(rename = "Bundesliga")]
    Bundesliga,
    #[serde(rename = "La Liga")]
    LaLiga,
    #[serde(rename = "Euro Cup")]
    EuroCup,
}

impl CaseSource {
    pub const ALL: [CaseSource; 6] = [
        CaseSource::WorldCup,
        CaseSource::PremierLeague,
        CaseSource::ChampionsLeague,
        CaseSource::Bundesliga,
        CaseSource::LaLiga,
        CaseSource::EuroCup,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseSource::WorldCup => "FIFA World Cup",
            CaseSource::PremierLeague => "Premier League",
            CaseSource::ChampionsLeague => "UEFA Champions League",
            CaseSource::Bundesliga => "Bundesliga",
            CaseSource::LaLiga => "La Liga",
            CaseSource::EuroCup => "Euro Cup",
        }
    }
}

impl fmt::Display for CaseSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One historical incident with its official decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEntry {
    pub id: u32,
    #[serde(rename = "case")]
    pub case_description: String,
    pub decision: String,
    pub controversiality: Controversiality,
    pub source: CaseSource,
    pub embedding: EmbeddingVector,
}

/// Identifier of a knowledge-base entry. Ordering is the retrieval tie-break.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EntryRef {
    Case(u32),
    Segment(String),
}

impl fmt::Display for EntryRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntryRef::Case(id) => write!(f, "case #{id}"),
            EntryRef::Segment(id) => f.write_str(id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub entry_ref: EntryRef,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Entries {
    Rules(Vec<RuleSegment>),
    Cases(Vec<CaseEntry>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    embedder_fingerprint: String,
    dim: Option<usize>,
    entries: Entries,
    norms: Vec<f64>,
}

impl KnowledgeBase {
    pub fn from_rules(
        segments: Vec<RuleSegment>,
        embedder_fingerprint: impl Into<String>,
    ) -> Result<Self, KbError> {
        let mut ids = HashSet::new();
        let mut pages = HashSet::new();
        for s in &segments {
            if s.text.trim().is_empty() {
                return Err(KbError::Invalid(format!("segment {} has empty text", s.segment_id)));
            }
            if !ids.insert(s.segment_id.as_str()) {
                return Err(KbError::Invalid(format!("duplicate segment id {}", s.segment_id)));
            }
            let doc = s.metadata.get("source").map(String::as_str).unwrap_or("");
            if s.page_number == 0 || !pages.insert((doc, s.page_number)) {
                return Err(KbError::Invalid(format!(
                    "invalid or duplicate page number {} in {}",
                    s.page_number, s.segment_id
                )));
            }
        }
        Self::build(Entries::Rules(segments), embedder_fingerprint.into())
    }

    pub fn from_cases(
        cases: Vec<CaseEntry>,
        embedder_fingerprint: impl Into<String>,
    ) -> Result<Self, KbError> {
        let mut ids = HashSet::new();
        for c in &cases {
            if c.id == 0 {
                return Err(KbError::Invalid("case id must be positive".into()));
            }
            if !ids.insert(c.id) {
                return Err(KbError::DuplicateCaseId(c.id));
            }
        }
        Self::build(Entries::Cases(cases), embedder_fingerprint.into())
    }

    fn build(entries: Entries, embedder_fingerprint: String) -> Result<Self, KbError> {
        let embeddings: Vec<&EmbeddingVector> = match &entries {
            Entries::Rules(v) => v.iter().map(|s| &s.embedding).collect(),
            Entries::Cases(v) => v.iter().map(|c| &c.embedding).collect(),
        };
        let dim = embeddings.first().map(|e| e.dim());
        let mut norms = Vec::with_capacity(embeddings.len());
        for e in &embeddings {
            if Some(e.dim()) != dim {
                return Err(VectorError::DimensionMismatch {
                    left: dim.unwrap_or(0),
                    right: e.dim(),
                }
                .into());
            }
            let n = e.norm();
            if n == 0.0 {
                return Err(VectorError::ZeroMagnitude.into());
            }
            if !n.is_finite() {
                return Err(KbError::Invalid("embedding norm overflows".into()));
            }
            norms.push(n);
        }
        Ok(Self {
            embedder_fingerprint,
            dim,
            entries,
            norms,
        })
    }

    pub fn kind(&self) -> KbKind {
        match self.entries {
            Entries::Rules(_) => KbKind::Rules,
            Entries::Cases(_) => KbKind::Cases,
        }
    }

    pub fn embedder_fingerprint(&self) -> &str {
        &self.embedder_fingerprint
    }

    /// Embedding dimension, `None` for an empty base.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn entries(&self) -> &Entries {
        &self.entries
    }

    pub fn rules(&self) -> Option<&[RuleSegment]> {
        match &self.entries {
            Entries::Rules(v) => Some(v),
            Entries::Cases(_) => None,
        }
    }

    pub fn cases(&self) -> Option<&[CaseEntry]> {
        match &self.entries {
            Entries::Cases(v) => Some(v),
            Entries::Rules(_) => None,
        }
    }

    pub fn rule(&self, segment_id: &str) -> Option<&RuleSegment> {
        self.rules()?.iter().find(|s| s.segment_id == segment_id)
    }

    pub fn case(&self, id: u32) -> Option<&CaseEntry> {
        self.cases()?.iter().find(|c| c.id == id)
    }

    fn entry(&self, i: usize) -> (EntryRef, &[f64]) {
        match &self.entries {
            Entries::Rules(v) => (
                EntryRef::Segment(v[i].segment_id.clone()),
                v[i].embedding.values(),
            ),
            Entries::Cases(v) => (EntryRef::Case(v[i].id), v[i].embedding.values()),
        }
    }

    fn entry_id_cmp(&self, a: usize, b: usize) -> Ordering {
        match &self.entries {
            Entries::Rules(v) => v[a].segment_id.cmp(&v[b].segment_id),
            Entries::Cases(v) => v[a].id.cmp(&v[b].id),
        }
    }

    /// Exact top-k by cosine similarity against an already-embedded query.
    ///
    /// Hits are ordered by score descending, ties by ascending entry id.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<RetrievalHit>, KbError> {
        if k == 0 {
            return Err(KbError::InvalidK);
        }
        let dim = self.dim.ok_or(KbError::EmptyKnowledgeBase)?;
        if query.dim() != dim {
            return Err(VectorError::DimensionMismatch {
                left: query.dim(),
                right: dim,
            }
            .into());
        }
        let qn = query.norm();
        if qn == 0.0 {
            return Err(VectorError::ZeroMagnitude.into());
        }

        // Max-heap whose top is the worst of the current best k.
        let mut heap: BinaryHeap<Candidate<'_>> = BinaryHeap::with_capacity(k + 1);
        for i in 0..self.len() {
            let (_, values) = self.entry(i);
            let score = vector::cosine_with_norms(query.values(), qn, values, self.norms[i]);
            let cand = Candidate { score, index: i, kb: self };
            if heap.len() < k {
                heap.push(cand);
            } else if let Some(worst) = heap.peek() {
                if cand.cmp(worst) == Ordering::Less {
                    heap.pop();
                    heap.push(cand);
                }
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .enumerate()
            .map(|(r, c)| RetrievalHit {
                entry_ref: self.entry(c.index).0,
                score: c.score,
                rank: r + 1,
            })
            .collect())
    }
}

/// Orders better candidates first: higher score, then smaller id.
struct Candidate<'a> {
    score: f64,
    index: usize,
    kb: &'a KnowledgeBase,
}

impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.kb.entry_id_cmp(self.index, other.index))
    }
}

impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate<'_> {}

/// Embed `query_text` and return the `k` most similar entries of `kb`.
pub fn retrieve_top_k(
    query_text: &str,
    kb: &KnowledgeBase,
    k: usize,
    embedder: &dyn Embedder,
) -> Result<Vec<RetrievalHit>, KbError> {
    if k == 0 {
        return Err(KbError::InvalidK);
    }
    if kb.is_empty() {
        return Err(KbError::EmptyKnowledgeBase);
    }
    if embedder.fingerprint() != kb.embedder_fingerprint() {
        return Err(KbError::Stale(format!(
            "{} index was built with {:?}, query embedder is {:?}",
            kb.kind(),
            kb.embedder_fingerprint(),
            embedder.fingerprint()
        )));
    }
    let query = embed_text(embedder, query_text)?;
    kb.search(&query, k)
}
