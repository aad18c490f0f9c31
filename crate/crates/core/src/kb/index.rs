use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CaseEntry, Entries, KbError, KbKind, KnowledgeBase, RuleSegment};

/// Bumped whenever the on-disk layout changes.
pub const INDEX_FORMAT_VERSION: u32 = 1;
const INDEX_FORMAT: &str = "knowledge-base-index";

#[derive(Serialize, Deserialize)]
struct IndexFile {
    format: String,
    version: u32,
    kind: KbKind,
    embedder_fingerprint: String,
    dim: Option<usize>,
    #[serde(default)]
    rules: Vec<RuleSegment>,
    #[serde(default)]
    cases: Vec<CaseEntry>,
}

/// Write `kb` as a single self-describing JSON file.
///
/// Floats go through a shortest round-trip representation, so loading gives
/// back bit-identical embeddings.
pub fn save_index(kb: &KnowledgeBase, path: &Path) -> Result<(), KbError> {
    let io = |source| KbError::Io {
        path: path.display().to_string(),
        source,
    };
    let (rules, cases) = match kb.entries() {
        Entries::Rules(r) => (r.clone(), Vec::new()),
        Entries::Cases(c) => (Vec::new(), c.clone()),
    };
    let file = IndexFile {
        format: INDEX_FORMAT.into(),
        version: INDEX_FORMAT_VERSION,
        kind: kb.kind(),
        embedder_fingerprint: kb.embedder_fingerprint().to_string(),
        dim: kb.dim(),
        rules,
        cases,
    };
    let json = serde_json::to_vec(&file).map_err(|e| KbError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(&json).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Load an index written by [`save_index`].
pub fn load_index(path: &Path) -> Result<KnowledgeBase, KbError> {
    let parse = |message: String| KbError::Parse {
        path: path.display().to_string(),
        message,
    };
    if path.as_os_str().is_empty() {
        return Err(KbError::Io {
            path: String::new(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "empty index path"),
        });
    }
    let raw = fs::read(path).map_err(|source| KbError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: IndexFile = serde_json::from_slice(&raw).map_err(|e| parse(e.to_string()))?;
    if file.format != INDEX_FORMAT {
        return Err(parse(format!("not a knowledge-base index (format {:?})", file.format)));
    }
    if file.version != INDEX_FORMAT_VERSION {
        return Err(KbError::Stale(format!(
            "{}: index format version {} (this build reads {INDEX_FORMAT_VERSION})",
            path.display(),
            file.version
        )));
    }
    let kb = match file.kind {
        KbKind::Rules if file.cases.is_empty() => {
            KnowledgeBase::from_rules(file.rules, file.embedder_fingerprint)?
        }
        KbKind::Cases if file.rules.is_empty() => {
            KnowledgeBase::from_cases(file.cases, file.embedder_fingerprint)?
        }
        kind => return Err(parse(format!("{kind} index contains entries of the other kind"))),
    };
    if kb.dim() != file.dim {
        return Err(parse(format!(
            "declared dimension {:?} does not match entries ({:?})",
            file.dim,
            kb.dim()
        )));
    }
    Ok(kb)
}

/// [`load_index`], also requiring the index to match `fingerprint`.
pub fn load_index_for(path: &Path, fingerprint: &str) -> Result<KnowledgeBase, KbError> {
    let kb = load_index(path)?;
    if kb.embedder_fingerprint() != fingerprint {
        return Err(KbError::Stale(format!(
            "{} was built with embedder {:?}, current embedder is {:?}",
            path.display(),
            kb.embedder_fingerprint(),
            fingerprint
        )));
    }
    Ok(kb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{Embedder, HashEmbedder};
    use crate::kb::{ingest_rule_pages, retrieve_top_k, CaseSource, Controversiality, EmbeddingVector};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn rules_kb() -> KnowledgeBase {
        let pages: Vec<String> = ["Law 12 fouls and misconduct", "Law 11 offside", "Law 8 kick-off"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let meta = BTreeMap::from([("edition".to_string(), "2025/26".to_string())]);
        ingest_rule_pages(&pages, &meta, &HashEmbedder::default(), 1).unwrap().0
    }

    #[test]
    fn round_trip_preserves_entries_and_retrieval() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rules.json");
        let kb = rules_kb();
        save_index(&kb, &path).unwrap();
        let back = load_index(&path).unwrap();
        assert_eq!(back, kb);

        let e = HashEmbedder::default();
        let before = retrieve_top_k("kick-off", &kb, 2, &e).unwrap();
        let after = retrieve_top_k("kick-off", &back, 2, &e).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn load_errors() {
        assert!(matches!(load_index(Path::new("")), Err(KbError::Io { .. })));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, b"{not json").unwrap();
        assert!(matches!(load_index(&path), Err(KbError::Parse { .. })));

        let good = dir.path().join("good.json");
        save_index(&rules_kb(), &good).unwrap();
        assert!(matches!(load_index_for(&good, "someone-else"), Err(KbError::Stale(_))));
        assert!(load_index_for(&good, HashEmbedder::default().fingerprint()).is_ok());

        let mut v: serde_json::Value = serde_json::from_slice(&fs::read(&good).unwrap()).unwrap();
        v["version"] = serde_json::json!(99);
        fs::write(&good, serde_json::to_vec(&v).unwrap()).unwrap();
        assert!(matches!(load_index(&good), Err(KbError::Stale(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn embeddings_round_trip_bit_exact(
            vals in prop::collection::vec(
                prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite() && *v != 0.0), 5),
                1..6,
            )
        ) {
            let cases: Vec<CaseEntry> = vals.iter().enumerate().map(|(i, v)| CaseEntry {
                id: i as u32 + 1,
                case_description: format!("2010 World Cup: incident {i}"),
                decision: "Play on.".into(),
                controversiality: Controversiality::Somewhat,
                source: CaseSource::WorldCup,
                embedding: EmbeddingVector::new(v.clone()).unwrap(),
            }).collect();
            // Products of huge components overflow the norm; skip those.
            prop_assume!(cases.iter().all(|c| c.embedding.norm().is_finite() && c.embedding.norm() > 0.0));
            let kb = KnowledgeBase::from_cases(cases, "fp").unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("cases.json");
            save_index(&kb, &path).unwrap();
            let back = load_index(&path).unwrap();
            for (a, b) in kb.cases().unwrap().iter().zip(back.cases().unwrap()) {
                let abits: Vec<u64> = a.embedding.values().iter().map(|x| x.to_bits()).collect();
                let bbits: Vec<u64> = b.embedding.values().iter().map(|x| x.to_bits()).collect();
                prop_assert_eq!(abits, bbits);
            }
        }
    }
}
