//! Corpus refinement: charset/ignored filtering, duplicate removal,
//! benchmark label collisions and summary statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::is_vertical_instance;
use crate::manifest::{ReviewItem, TextInstance};
use crate::metrics::{normalize, NormalizationMode};

#[derive(Debug, Error, PartialEq)]
pub enum ConsolidateError {
    #[error("instance {0:?} has no image digest")]
    MissingDigest(String),
    #[error("charset {0:?} is empty")]
    EmptyCharset(String),
    #[error("unknown charset profile {0:?} (expected ascii95 or strict91)")]
    UnknownProfile(String),
}

/// ASCII punctuation kept by the 91-class profile: the 32 printable ASCII
/// symbols minus `^ { | }`.
pub const STRICT_SYMBOLS: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]_`~";

/// Characters a label may contain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Charset {
    pub name: String,
    pub allowed: BTreeSet<char>,
}

impl Charset {
    pub fn new(name: impl Into<String>, allowed: impl IntoIterator<Item = char>) -> Result<Self, ConsolidateError> {
        let name = name.into();
        let allowed: BTreeSet<char> = allowed.into_iter().collect();
        if allowed.is_empty() {
            return Err(ConsolidateError::EmptyCharset(name));
        }
        Ok(Charset { name, allowed })
    }

    /// The 95 printable ASCII characters, space included.
    pub fn printable_ascii() -> Self {
        Charset { name: "ascii95".into(), allowed: (' '..='~').collect() }
    }

    /// Digits, both letter cases, [`STRICT_SYMBOLS`] and space: 91 classes.
    pub fn strict91() -> Self {
        let allowed = ('0'..='9').chain('A'..='Z').chain('a'..='z').chain(STRICT_SYMBOLS.chars()).chain([' ']).collect();
        Charset { name: "strict91".into(), allowed }
    }

    pub fn from_profile(name: &str) -> Result<Self, ConsolidateError> {
        match name {
            "ascii95" | "default" => Ok(Charset::printable_ascii()),
            "strict91" => Ok(Charset::strict91()),
            other => Err(ConsolidateError::UnknownProfile(other.to_string())),
        }
    }

    pub fn allows_space(&self) -> bool {
        self.allowed.contains(&' ')
    }

    /// First character of `label` outside the set.
    pub fn first_foreign(&self, label: &str) -> Option<char> {
        label.chars().find(|c| !self.allowed.contains(c))
    }

    pub fn len(&self) -> usize {
        self.allowed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allowed.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum DropReason {
    Ignored,
    NonCharset { character: char },
}

/// One line of `drops.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dropped {
    pub id: String,
    #[serde(flatten)]
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removed {
    pub id: String,
    /// Id of the retained record this one duplicates, or the matched
    /// reference id.
    pub duplicate_of: String,
}

/// Drops ignored instances and labels with characters outside `charset`.
/// Output order follows input order.
pub fn apply_filters(instances: Vec<TextInstance>, charset: &Charset) -> (Vec<TextInstance>, Vec<Dropped>) {
    let mut kept = Vec::with_capacity(instances.len());
    let mut dropped = Vec::new();
    for inst in instances {
        if inst.ignored {
            dropped.push(Dropped { id: inst.id, reason: DropReason::Ignored });
        } else if let Some(character) = charset.first_foreign(&inst.label) {
            dropped.push(Dropped { id: inst.id, reason: DropReason::NonCharset { character } });
        } else {
            kept.push(inst);
        }
    }
    (kept, dropped)
}

type DedupKey = (String, Vec<(i64, i64)>, String);

fn dedup_key(inst: &TextInstance) -> Result<DedupKey, ConsolidateError> {
    let digest = inst.digest.clone().ok_or_else(|| ConsolidateError::MissingDigest(inst.id.clone()))?;
    let poly = inst.polygon.vertices().iter().map(|v| (v.x.round() as i64, v.y.round() as i64)).collect();
    Ok((digest, poly, inst.label.clone()))
}

/// Removes exact duplicates: records sharing image digest, polygon (rounded to
/// whole pixels) and label. Within each duplicate class the smallest id is
/// kept, so the kept set does not depend on input order. Kept records stay in
/// input order.
pub fn dedup_exact(instances: Vec<TextInstance>) -> Result<(Vec<TextInstance>, Vec<Removed>), ConsolidateError> {
    let keys: Vec<DedupKey> = instances.iter().map(dedup_key).collect::<Result<_, _>>()?;
    let mut winner: HashMap<&DedupKey, &str> = HashMap::new();
    for (inst, key) in instances.iter().zip(&keys) {
        winner
            .entry(key)
            .and_modify(|w| {
                if inst.id.as_str() < *w {
                    *w = inst.id.as_str();
                }
            })
            .or_insert(inst.id.as_str());
    }
    let winner: HashMap<&DedupKey, String> = winner.into_iter().map(|(k, v)| (k, v.to_string())).collect();
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    let mut taken: HashSet<String> = HashSet::new();
    for (inst, key) in instances.into_iter().zip(&keys) {
        let w = &winner[key];
        // a repeated id equal to the winner is still a duplicate after the first
        if &inst.id == w && taken.insert(inst.id.clone()) {
            kept.push(inst);
        } else {
            removed.push(Removed { id: inst.id, duplicate_of: w.clone() });
        }
    }
    Ok((kept, removed))
}

/// Removes instances whose `source_image_id` is in `reference_ids`
/// (e.g. images already present in another dataset). Instances without a
/// source id are kept.
pub fn dedup_by_source_id(
    instances: Vec<TextInstance>,
    reference_ids: &HashSet<String>,
) -> (Vec<TextInstance>, Vec<Removed>) {
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for inst in instances {
        match &inst.source_image_id {
            Some(sid) if reference_ids.contains(sid) => {
                removed.push(Removed { duplicate_of: sid.clone(), id: inst.id });
            }
            _ => kept.push(inst),
        }
    }
    (kept, removed)
}

/// Corpus instances whose normalized label equals some benchmark label,
/// queued for human review rather than removed.
pub fn list_label_collisions(
    corpus: &[TextInstance],
    benchmark: &[TextInstance],
    mode: NormalizationMode,
) -> Vec<ReviewItem> {
    let mut bench: HashMap<String, &TextInstance> = HashMap::new();
    for b in benchmark {
        bench.entry(normalize(&b.label, mode)).or_insert(b);
    }
    corpus
        .iter()
        .filter_map(|c| {
            let key = normalize(&c.label, mode);
            if key.is_empty() {
                return None;
            }
            bench.get(&key).map(|b| ReviewItem {
                item_id: c.id.clone(),
                image_ref: c.image_ref.clone(),
                label: c.label.clone(),
                reason: format!("label matches benchmark instance {} ({:?}) under {}", b.id, b.label, mode),
                thumbnail_ref: None,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub instance_count: usize,
    /// Distinct exact (case-sensitive) labels.
    pub vocabulary_count: usize,
    pub vertical_count: usize,
    pub per_dataset_counts: BTreeMap<String, usize>,
}

impl CorpusSummary {
    pub fn report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "instances     {:>10}", self.instance_count);
        let _ = writeln!(out, "vocabularies  {:>10}", self.vocabulary_count);
        let _ = writeln!(out, "vertical      {:>10}", self.vertical_count);
        if !self.per_dataset_counts.is_empty() {
            let _ = writeln!(out, "per dataset:");
            let width = self.per_dataset_counts.keys().map(|k| k.len()).max().unwrap_or(0);
            for (name, n) in &self.per_dataset_counts {
                let _ = writeln!(out, "  {name:<width$}  {n:>10}");
            }
        }
        out
    }
}

pub fn summarize(corpus: &[TextInstance]) -> CorpusSummary {
    let mut vocab: HashSet<&str> = HashSet::new();
    let mut summary = CorpusSummary::default();
    for inst in corpus {
        summary.instance_count += 1;
        vocab.insert(inst.label.as_str());
        if is_vertical_instance(&inst.polygon, &inst.label) {
            summary.vertical_count += 1;
        }
        *summary.per_dataset_counts.entry(inst.source_dataset.clone()).or_insert(0) += 1;
    }
    summary.vocabulary_count = vocab.len();
    summary
}
