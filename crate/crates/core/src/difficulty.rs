//! Ensemble error voting: each sample is graded by how many recognizers read
//! it correctly.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::{PredictionManifest, TextInstance};
use crate::metrics::{is_correct, NormalizationMode};

/// Ensemble size the level boundaries were defined for.
pub const REFERENCE_ENSEMBLE: usize = 13;

/// Inclusive upper vote counts of challenging, hard, medium and normal at
/// [`REFERENCE_ENSEMBLE`] models; anything above is easy.
const REFERENCE_BOUNDS: [usize; 4] = [0, 4, 7, 10];

#[derive(Debug, Error, PartialEq)]
pub enum DifficultyError {
    #[error("sample {sample_id:?} is missing from predictions of model {model_id:?}")]
    MissingPrediction { sample_id: String, model_id: String },
    #[error("no prediction manifests given")]
    NoModels,
    #[error("vote vector has {bits} bits but {models} model ids")]
    LengthMismatch { bits: usize, models: usize },
    #[error("instance {0:?} has no difficulty level")]
    Unassigned(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifficultyLevel {
    Challenging,
    Hard,
    Medium,
    Normal,
    Easy,
}

impl DifficultyLevel {
    /// Hardest first.
    pub const ALL: [DifficultyLevel; 5] = [
        DifficultyLevel::Challenging,
        DifficultyLevel::Hard,
        DifficultyLevel::Medium,
        DifficultyLevel::Normal,
        DifficultyLevel::Easy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DifficultyLevel::Challenging => "challenging",
            DifficultyLevel::Hard => "hard",
            DifficultyLevel::Medium => "medium",
            DifficultyLevel::Normal => "normal",
            DifficultyLevel::Easy => "easy",
        }
    }
}

impl std::fmt::Display for DifficultyLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DifficultyLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DifficultyLevel::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| format!("unknown difficulty level {s:?}"))
    }
}

/// Per-model correctness of one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteVector {
    pub sample_id: String,
    bits: Vec<u8>,
    model_ids: Vec<String>,
}

impl VoteVector {
    pub fn new(sample_id: impl Into<String>, bits: Vec<bool>, model_ids: Vec<String>) -> Result<Self, DifficultyError> {
        if bits.is_empty() {
            return Err(DifficultyError::NoModels);
        }
        if bits.len() != model_ids.len() {
            return Err(DifficultyError::LengthMismatch { bits: bits.len(), models: model_ids.len() });
        }
        Ok(VoteVector { sample_id: sample_id.into(), bits: bits.into_iter().map(u8::from).collect(), model_ids })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn model_ids(&self) -> &[String] {
        &self.model_ids
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn sum(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }
}

/// Bit i is set iff model i's prediction equals the ground truth under `mode`.
pub fn vote_vector(
    sample_id: &str,
    gt: &str,
    manifests: &[PredictionManifest],
    mode: NormalizationMode,
) -> Result<VoteVector, DifficultyError> {
    if manifests.is_empty() {
        return Err(DifficultyError::NoModels);
    }
    let mut bits = Vec::with_capacity(manifests.len());
    for m in manifests {
        let pred = m.predictions.get(sample_id).ok_or_else(|| DifficultyError::MissingPrediction {
            sample_id: sample_id.to_string(),
            model_id: m.model_id.clone(),
        })?;
        bits.push(is_correct(pred, gt, mode));
    }
    VoteVector::new(sample_id, bits, manifests.iter().map(|m| m.model_id.clone()).collect())
}

/// Level boundaries for an ensemble of `n` models: `ceil(n * b / 13)` for the
/// reference bounds, which reproduces them exactly at `n = 13`.
pub fn level_bounds(n: usize) -> [usize; 4] {
    REFERENCE_BOUNDS.map(|b| (n * b).div_ceil(REFERENCE_ENSEMBLE))
}

pub fn level_for_sum(sum: usize, n: usize) -> DifficultyLevel {
    let bounds = level_bounds(n);
    DifficultyLevel::ALL
        .into_iter()
        .zip(bounds)
        .find(|&(_, upper)| sum <= upper)
        .map_or(DifficultyLevel::Easy, |(level, _)| level)
}

pub fn assign_level(v: &VoteVector) -> DifficultyLevel {
    level_for_sum(v.sum(), v.len())
}

/// Fraction of instances per level; every level is present in the output.
pub fn level_distribution<'a, I>(instances: I) -> Result<BTreeMap<DifficultyLevel, f64>, DifficultyError>
where
    I: IntoIterator<Item = &'a TextInstance>,
{
    let mut counts: BTreeMap<DifficultyLevel, usize> = DifficultyLevel::ALL.into_iter().map(|l| (l, 0)).collect();
    let mut total = 0usize;
    for inst in instances {
        let level = inst.difficulty.ok_or_else(|| DifficultyError::Unassigned(inst.id.clone()))?;
        *counts.get_mut(&level).expect("all levels seeded") += 1;
        total += 1;
    }
    Ok(counts
        .into_iter()
        .map(|(l, c)| (l, if total == 0 { 0.0 } else { c as f64 / total as f64 }))
        .collect())
}

/// Votes every instance against all manifests and stores the level.
/// Per-sample work runs in parallel; output order is input order.
pub fn annotate(
    instances: &mut [TextInstance],
    manifests: &[PredictionManifest],
    mode: NormalizationMode,
) -> Result<Vec<VoteVector>, DifficultyError> {
    let votes: Vec<VoteVector> = instances
        .par_iter()
        .map(|inst| vote_vector(&inst.id, &inst.label, manifests, mode))
        .collect::<Result<_, _>>()?;
    for (inst, v) in instances.iter_mut().zip(&votes) {
        inst.difficulty = Some(assign_level(v));
    }
    Ok(votes)
}
