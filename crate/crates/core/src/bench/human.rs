//! Blind pairwise human evaluation: sampling, masked packets with a
//! separate key file, and rating aggregation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{fmt2, question_id, weighted_overall, BenchError, BenchItem};
use crate::pipeline::Modality;
use crate::LabeledOption;

pub const SLOT_A: &str = "System A";
pub const SLOT_B: &str = "System B";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRef {
    pub sample_id: String,
    pub question_id: String,
    /// Position in the benchmark file.
    pub index: usize,
    pub modality: Modality,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanEvalSample {
    pub seed: u64,
    pub n_text: usize,
    pub n_video: usize,
    pub samples: Vec<SampleRef>,
}

/// Uniform sampling without replacement, seeded. Text samples come first,
/// each subset in benchmark order.
pub fn sample_for_human_eval(
    items: &[BenchItem],
    n_text: usize,
    n_video: usize,
    seed: u64,
) -> Result<HumanEvalSample, BenchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_text + n_video);
    for (modality, n) in [(Modality::Text, n_text), (Modality::Video, n_video)] {
        let pool: Vec<usize> = (0..items.len()).filter(|&i| items[i].modality() == modality).collect();
        if n > pool.len() {
            return Err(BenchError::Shortfall {
                subset: modality,
                requested: n,
                available: pool.len(),
            });
        }
        let mut picked: Vec<usize> = sample(&mut rng, pool.len(), n).into_iter().map(|i| pool[i]).collect();
        picked.sort_unstable();
        for index in picked {
            samples.push(SampleRef {
                sample_id: format!("s{:03}", samples.len() + 1),
                question_id: question_id(index),
                index,
                modality,
            });
        }
    }
    Ok(HumanEvalSample {
        seed,
        n_text,
        n_video,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketClip {
    pub path: String,
    pub context: String,
}

/// What a rater sees for one sample. Explanations are keyed by slot name
/// only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub sample_id: String,
    pub modality: Modality,
    pub question: String,
    pub options: Vec<LabeledOption>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<PacketClip>,
    pub explanations: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketFile {
    pub packets: Vec<Packet>,
}

impl PacketFile {
    /// The exact bytes written to disk.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("packets serialize");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEntry {
    pub sample_id: String,
    pub question_id: String,
    pub modality: Modality,
    pub slot_a: String,
    pub slot_b: String,
}

/// The sealed mapping from slots back to systems.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyFile {
    pub seed: u64,
    pub systems: Vec<String>,
    pub n_text: usize,
    pub n_video: usize,
    pub entries: Vec<KeyEntry>,
}

impl KeyFile {
    pub fn entry(&self, sample_id: &str) -> Option<&KeyEntry> {
        self.entries.iter().find(|e| e.sample_id == sample_id)
    }

    /// The system behind `slot` for `sample_id`.
    pub fn unmask(&self, sample_id: &str, slot: &str) -> Option<&str> {
        let e = self.entry(sample_id)?;
        match slot {
            SLOT_A => Some(&e.slot_a),
            SLOT_B => Some(&e.slot_b),
            _ => None,
        }
    }
}

/// Build masked packets and the key file. `explanations` maps each of
/// exactly two system names to `{question_id: explanation}`. Fails if any
/// system name would appear anywhere in the packet file.
pub fn export_human_eval_packets(
    items: &[BenchItem],
    samples: &HumanEvalSample,
    explanations: &BTreeMap<String, BTreeMap<String, String>>,
    seed: u64,
) -> Result<(PacketFile, KeyFile), BenchError> {
    let systems: Vec<&String> = explanations.keys().collect();
    if systems.len() != 2 {
        return Err(BenchError::Contract(format!(
            "human evaluation compares exactly two systems, got {}",
            systems.len()
        )));
    }
    if systems.iter().any(|s| s.is_empty()) {
        return Err(BenchError::Contract("system names must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut packets = Vec::with_capacity(samples.samples.len());
    let mut entries = Vec::with_capacity(samples.samples.len());
    for s in &samples.samples {
        let item = items.get(s.index).ok_or_else(|| {
            BenchError::Contract(format!("{} refers to item {} which does not exist", s.sample_id, s.index))
        })?;
        let text_of = |system: &String| {
            explanations[system]
                .get(&s.question_id)
                .cloned()
                .ok_or_else(|| BenchError::MissingExplanation {
                    system: system.clone(),
                    question_id: s.question_id.clone(),
                })
        };
        let (a, b) = if rng.gen_bool(0.5) {
            (systems[1], systems[0])
        } else {
            (systems[0], systems[1])
        };
        let packet = Packet {
            sample_id: s.sample_id.clone(),
            modality: s.modality,
            question: item.question.clone(),
            options: item.options(),
            clip: item.video().map(|(path, context)| PacketClip {
                path: path.into(),
                context: context.into(),
            }),
            explanations: BTreeMap::from([(SLOT_A.to_string(), text_of(a)?), (SLOT_B.to_string(), text_of(b)?)]),
        };
        let bytes = serde_json::to_string_pretty(&packet).expect("packets serialize");
        if let Some(system) = systems.iter().find(|name| bytes.contains(name.as_str())) {
            return Err(BenchError::Blindness {
                system: system.to_string(),
                sample_id: s.sample_id.clone(),
            });
        }
        packets.push(packet);
        entries.push(KeyEntry {
            sample_id: s.sample_id.clone(),
            question_id: s.question_id.clone(),
            modality: s.modality,
            slot_a: a.clone(),
            slot_b: b.clone(),
        });
    }
    let file = PacketFile { packets };
    let all = file.to_json();
    if let Some(system) = systems.iter().find(|name| all.contains(name.as_str())) {
        return Err(BenchError::Blindness {
            system: system.to_string(),
            sample_id: "(file)".into(),
        });
    }
    let key = KeyFile {
        seed,
        systems: systems.into_iter().cloned().collect(),
        n_text: samples.n_text,
        n_video: samples.n_video,
        entries,
    };
    Ok((file, key))
}

/// One rater's 1 to 5 scores for both slots of one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub sample_id: String,
    pub rater_id: String,
    pub scores: BTreeMap<String, i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SubsetScores {
    pub text: Option<f64>,
    pub video: Option<f64>,
    pub overall: Option<f64>,
}

impl SubsetScores {
    fn new(text: Option<f64>, video: Option<f64>, weights: (usize, usize)) -> Self {
        let overall = match (text, video) {
            (Some(t), Some(v)) => weighted_overall(t, weights.0, v, weights.1).ok(),
            (t, v) => t.or(v),
        };
        Self { text, video, overall }
    }
}

/// Full-precision means. `raters[rater][system]`, `average[system]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanEvalSummary {
    pub systems: Vec<String>,
    pub text_weight: usize,
    pub video_weight: usize,
    pub raters: BTreeMap<String, BTreeMap<String, SubsetScores>>,
    pub average: BTreeMap<String, SubsetScores>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Validate ratings against the key, unmask them and compute per-rater
/// subset means, weighted overalls and the mean-of-raters average.
pub fn aggregate_ratings(ratings: &[RatingRecord], key: &KeyFile) -> Result<HumanEvalSummary, BenchError> {
    if ratings.is_empty() {
        return Err(BenchError::Rating("no ratings".into()));
    }
    let slots = BTreeSet::from([SLOT_A.to_string(), SLOT_B.to_string()]);
    let mut seen = BTreeSet::new();
    // (rater, system, modality) -> scores
    let mut pooled: BTreeMap<(&str, &str, Modality), Vec<f64>> = BTreeMap::new();
    for (i, r) in ratings.iter().enumerate() {
        let entry = key
            .entry(&r.sample_id)
            .ok_or_else(|| BenchError::Rating(format!("rating {i}: unknown sample {:?}", r.sample_id)))?;
        if r.rater_id.trim().is_empty() {
            return Err(BenchError::Rating(format!("rating {i}: empty rater id")));
        }
        if !seen.insert((&r.rater_id, &r.sample_id)) {
            return Err(BenchError::Rating(format!(
                "rating {i}: {} rated {} twice",
                r.rater_id, r.sample_id
            )));
        }
        let keys: BTreeSet<String> = r.scores.keys().cloned().collect();
        if keys != slots {
            return Err(BenchError::Rating(format!(
                "rating {i}: scores must cover exactly {SLOT_A:?} and {SLOT_B:?}"
            )));
        }
        for (slot, &score) in &r.scores {
            if !(1..=5).contains(&score) {
                return Err(BenchError::Rating(format!(
                    "rating {i}: score {score} for {slot} is outside 1..=5"
                )));
            }
            let system = if slot == SLOT_A { &entry.slot_a } else { &entry.slot_b };
            pooled
                .entry((r.rater_id.as_str(), system.as_str(), entry.modality))
                .or_default()
                .push(score as f64);
        }
    }
    let weights = (key.n_text, key.n_video);
    let rater_ids: BTreeSet<&str> = ratings.iter().map(|r| r.rater_id.as_str()).collect();
    let mut raters = BTreeMap::new();
    for rater in &rater_ids {
        let mut per_system = BTreeMap::new();
        for system in &key.systems {
            let m = |modality| pooled.get(&(*rater, system.as_str(), modality)).and_then(|v| mean(v.iter().copied()));
            per_system.insert(system.clone(), SubsetScores::new(m(Modality::Text), m(Modality::Video), weights));
        }
        raters.insert(rater.to_string(), per_system);
    }
    let mut average = BTreeMap::new();
    for system in &key.systems {
        let col = |f: fn(&SubsetScores) -> Option<f64>| mean(raters.values().filter_map(|s| f(&s[system])));
        average.insert(system.clone(), SubsetScores::new(col(|s| s.text), col(|s| s.video), weights));
    }
    Ok(HumanEvalSummary {
        systems: key.systems.clone(),
        text_weight: weights.0,
        video_weight: weights.1,
        raters,
        average,
    })
}

impl HumanEvalSummary {
    /// Plain-text table: one row per system, text/video/overall per rater
    /// then the average.
    pub fn table(&self) -> String {
        let f = |x: Option<f64>| x.map(fmt2).unwrap_or_else(|| "-".into());
        let mut cols: Vec<(&str, &BTreeMap<String, SubsetScores>)> =
            self.raters.iter().map(|(r, s)| (r.as_str(), s)).collect();
        cols.push(("Average", &self.average));
        let mut out = format!("{:<16}", "");
        for (name, _) in &cols {
            out.push_str(&format!(" | {name:^20}"));
        }
        out.push_str(&format!("\n{:<16}", "system"));
        for _ in &cols {
            out.push_str(&format!(" | {:>6} {:>6} {:>6}", "text", "video", "all"));
        }
        out.push('\n');
        for system in &self.systems {
            out.push_str(&format!("{system:<16}"));
            for (_, scores) in &cols {
                let s = scores[system];
                out.push_str(&format!(" | {:>6} {:>6} {:>6}", f(s.text), f(s.video), f(s.overall)));
            }
            out.push('\n');
        }
        out
    }
}
