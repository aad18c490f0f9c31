//! Run configuration: the JSON config file plus its resolution into a
//! ready-to-run [`Pipeline`].
//!
//! ```json
//! {
//!   "backends": {"gpt": {"kind": "remote", "url": "...", "model": "gpt-4o",
//!                        "auth_env_var": "OPENAI_API_KEY", "vision": true}},
//!   "agents": {"default": "gpt"},
//!   "embedder": {"kind": "local-hash", "dim": 64},
//!   "run": {"rules_index": "out/rules.index.json", "k_text": 3}
//! }
//! ```
//!
//! Relative paths in the file resolve against the file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::agents::AgentRole;
use crate::backends::{BackendsConfig, ChatBackend, Embedder, GenerationParams};
use crate::bench::RunMetadata;
use crate::kb::{load_index_for, DEFAULT_TOP_K};
use crate::pipeline::{
    AblationConfig, AgentBackends, CommandFrames, DirectoryFrames, FrameSource, KnowledgeBases,
    Pipeline, PipelineConfig, DEFAULT_FRAME_BUDGET,
};

/// The optional `run` section. Every field can be overridden by a flag or
/// environment variable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub rules_index: Option<PathBuf>,
    pub cases_index: Option<PathBuf>,
    pub k_text: Option<usize>,
    pub k_video: Option<usize>,
    #[serde(default)]
    pub ablate_rule: bool,
    #[serde(default)]
    pub ablate_case: bool,
    pub parallel: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Relative clip paths resolve against this.
    pub media_root: Option<PathBuf>,
    pub frame_budget: Option<usize>,
    /// External frame extractor: program then arguments, with `{input}`,
    /// `{output_dir}` and `{count}` placeholders.
    pub frame_command: Option<Vec<String>>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    #[serde(flatten)]
    pub backends: BackendsConfig,
    #[serde(default)]
    pub run: RunSection,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&raw).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Values given on the command line or through the environment. `None`
/// defers to the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub rules_index: Option<PathBuf>,
    pub cases_index: Option<PathBuf>,
    pub k: Option<usize>,
    pub ablate_rule: bool,
    pub ablate_case: bool,
    pub parallel: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub const DEFAULT_PARALLEL: usize = 4;
pub const DEFAULT_SEED: u64 = 0;

/// Fully resolved settings for one command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub config_path: Option<PathBuf>,
    pub backends: BackendsConfig,
    pub rules_index: Option<PathBuf>,
    pub cases_index: Option<PathBuf>,
    pub k_text: usize,
    pub k_video: usize,
    pub ablation: AblationConfig,
    pub parallel: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub media_root: Option<PathBuf>,
    pub frame_budget: usize,
    pub frame_command: Option<Vec<String>>,
    pub params: GenerationParams,
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p
    }
}

impl RunConfig {
    /// Merge flags over the config file (if any) over built-in defaults.
    pub fn resolve(config_path: Option<&Path>, o: Overrides) -> Result<Self> {
        let (file, base) = match config_path {
            Some(p) => (
                ConfigFile::load(p)?,
                p.parent().map(Path::to_path_buf).unwrap_or_default(),
            ),
            None => (ConfigFile::default(), PathBuf::new()),
        };
        let run = file.run;
        let defaults = GenerationParams::default();
        let cfg = Self {
            config_path: config_path.map(Path::to_path_buf),
            backends: file.backends,
            rules_index: o.rules_index.or_else(|| run.rules_index.map(|p| resolve(&base, p))),
            cases_index: o.cases_index.or_else(|| run.cases_index.map(|p| resolve(&base, p))),
            k_text: o.k.or(run.k_text).unwrap_or(DEFAULT_TOP_K),
            k_video: o.k.or(run.k_video).unwrap_or(DEFAULT_TOP_K),
            ablation: AblationConfig {
                rule_enabled: !(o.ablate_rule || run.ablate_rule),
                case_enabled: !(o.ablate_case || run.ablate_case),
            },
            parallel: o.parallel.or(run.parallel).unwrap_or(DEFAULT_PARALLEL),
            seed: o.seed.or(run.seed).unwrap_or(DEFAULT_SEED),
            out: o
                .out
                .or_else(|| run.out.map(|p| resolve(&base, p)))
                .unwrap_or_else(|| PathBuf::from("out")),
            media_root: run.media_root.map(|p| resolve(&base, p)),
            frame_budget: run.frame_budget.unwrap_or(DEFAULT_FRAME_BUDGET),
            frame_command: run.frame_command,
            params: GenerationParams {
                temperature: run.temperature.unwrap_or(defaults.temperature),
                max_tokens: run.max_tokens.unwrap_or(defaults.max_tokens),
            },
        };
        if cfg.k_text == 0 || cfg.k_video == 0 {
            bail!("k must be at least 1");
        }
        if cfg.parallel == 0 {
            bail!("parallelism must be at least 1");
        }
        if cfg.frame_budget == 0 {
            bail!("frame_budget must be at least 1");
        }
        Ok(cfg)
    }

    fn base_dir(&self) -> PathBuf {
        self.config_path
            .as_deref()
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .unwrap_or_default()
    }

    pub fn embedder(&self) -> Result<Arc<dyn Embedder>> {
        Ok(self.backends.embedder.build()?)
    }

    fn frame_source(&self) -> Result<Arc<dyn FrameSource>> {
        Ok(match &self.frame_command {
            Some(cmd) => {
                let (program, args) = cmd.split_first().context("frame_command is empty")?;
                let mut src = CommandFrames::new(program.clone(), args.to_vec());
                src.root = self.media_root.clone();
                src.budget = self.frame_budget;
                Arc::new(src)
            }
            None => {
                let mut src = DirectoryFrames::new(self.media_root.clone());
                src.budget = self.frame_budget;
                Arc::new(src)
            }
        })
    }

    /// Load indexes, instantiate backends and assemble the pipeline.
    /// Indexes must have been built with the configured embedder.
    pub fn build_pipeline(&self) -> Result<(Pipeline, RunMetadata)> {
        if self.backends.backends.is_empty() {
            bail!("no backends configured (pass --config with a `backends` section)");
        }
        let embedder = self.embedder()?;
        let load = |p: &Option<PathBuf>| -> Result<_> {
            p.as_ref()
                .map(|p| {
                    load_index_for(p, embedder.fingerprint())
                        .with_context(|| format!("loading index {}", p.display()))
                        .map(Arc::new)
                })
                .transpose()
        };
        let kbs = KnowledgeBases {
            rules: if self.ablation.rule_enabled { load(&self.rules_index)? } else { None },
            cases: if self.ablation.case_enabled { load(&self.cases_index)? } else { None },
        };
        if self.ablation.rule_enabled && kbs.rules.is_none() {
            bail!("the rule agent needs a rules index (--rules-index) or --ablate-rule");
        }
        if self.ablation.case_enabled && kbs.cases.is_none() {
            bail!("the case agent needs a cases index (--cases-index) or --ablate-case");
        }
        let built = self.backends.build(&self.base_dir(), None)?;
        let mut backend_ids = BTreeMap::new();
        let mut pick = |role: AgentRole| -> Result<Arc<dyn ChatBackend>> {
            let id = self.backends.route(role.as_str())?;
            backend_ids.insert(role.as_str().to_string(), id.to_string());
            built
                .get(id)
                .cloned()
                .with_context(|| format!("agent {role} is routed to unknown backend {id:?}"))
        };
        let backends = AgentBackends {
            rule: pick(AgentRole::Rule)?,
            case: pick(AgentRole::Case)?,
            context: pick(AgentRole::Context)?,
            video: pick(AgentRole::Video)?,
            chief: pick(AgentRole::Chief)?,
        };
        let metadata = RunMetadata {
            benchmark: String::new(),
            backend_ids,
            ablation: self.ablation,
            k_text: self.k_text,
            k_video: self.k_video,
            rules_fingerprint: kbs.rules.as_ref().map(|k| k.embedder_fingerprint().to_string()),
            cases_fingerprint: kbs.cases.as_ref().map(|k| k.embedder_fingerprint().to_string()),
            embedder_fingerprint: embedder.fingerprint().to_string(),
            seed: self.seed,
        };
        let pipeline = Pipeline::new(
            kbs,
            backends,
            embedder,
            self.frame_source()?,
            PipelineConfig {
                k_text: self.k_text,
                k_video: self.k_video,
                ablation: self.ablation,
                params: self.params,
            },
        );
        Ok((pipeline, metadata))
    }
}
