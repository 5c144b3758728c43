//! Benchmark assembly: stratified general subset, reviewed challenge
//! subsets and the incomplete-text mutation set.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::difficulty::DifficultyLevel;
use crate::geometry::Polygon;
use crate::imaging::{crop_char_strip, encode_png, ImagingError, RasterImage, Side};
use crate::manifest::{
    digest_bytes, digest_file, effective_decisions, read_decisions, read_review_items, DecisionRecord,
    ManifestError, Provenance, ReviewItem, TextInstance, Verdict,
};

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("target size {target} exceeds the {available} available instances")]
    TargetTooLarge { target: usize, available: usize },
    #[error("target size must be at least 1")]
    ZeroTarget,
    #[error("instance {0:?} has no difficulty level")]
    Unassigned(String),
    #[error("subset {subset:?}: {count} candidate(s) have no decision, first {first:?}")]
    MissingDecisions { subset: String, count: usize, first: String },
    #[error("subset {subset:?}: accepted id {id:?} is not in the corpus")]
    UnknownId { subset: String, id: String },
    #[error("id {id:?} appears in both {first:?} and {second:?}")]
    IdCollision { id: String, first: String, second: String },
    #[error("invalid benchmark spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
}

/// How a stratified target is split over the difficulty levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StratifyMode {
    /// Equal counts per level; a level that runs short gives its remainder to
    /// the others in equal parts.
    #[default]
    Even,
    /// The same fraction of every level's population.
    Proportional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetSource {
    Reviewed,
    Stratified,
    Mutation,
}

/// One `[[subset]]` table of the spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsetSpec {
    pub name: String,
    pub source: SubsetSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub mode: StratifyMode,
    /// Review items (`queue.jsonl`) for reviewed subsets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decisions: Option<PathBuf>,
    /// Only decisions carrying this queue id count; defaults to the stem of
    /// the candidates file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queue: Option<String>,
}

/// A reviewed queue whose accepted items are removed from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExclusionSpec {
    pub candidates: PathBuf,
    pub decisions: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queue: Option<String>,
}

/// Declarative benchmark layout, read from TOML:
///
/// ```toml
/// seed = 7
///
/// [[subset]]
/// name = "curve"
/// source = "reviewed"
/// candidates = "queues/curve.jsonl"
/// decisions = "review/decisions.jsonl"
///
/// [[subset]]
/// name = "general"
/// source = "stratified"
/// target_size = 400
/// ```
///
/// A subset without its own `seed` uses the top-level one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(rename = "subset")]
    pub subsets: Vec<SubsetSpec>,
    #[serde(default, rename = "exclude", skip_serializing_if = "Vec::is_empty")]
    pub exclusions: Vec<ExclusionSpec>,
    /// Also drop training instances that share an image digest with a
    /// benchmark instance.
    #[serde(default = "default_true")]
    pub exclude_shared_images: bool,
}

fn default_true() -> bool {
    true
}

impl BenchmarkSpec {
    pub fn from_toml(text: &str) -> Result<Self, BenchmarkError> {
        let spec: BenchmarkSpec = toml::from_str(text).map_err(|e| BenchmarkError::Spec(e.to_string()))?;
        spec.check()?;
        Ok(spec)
    }

    /// Reads a spec file; relative paths inside it resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, BenchmarkError> {
        let text = std::fs::read_to_string(path).map_err(|e| ManifestError::io(path, e))?;
        let mut spec = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for s in &mut spec.subsets {
            s.candidates.as_mut().map(fix);
            s.decisions.as_mut().map(fix);
        }
        for e in &mut spec.exclusions {
            fix(&mut e.candidates);
            fix(&mut e.decisions);
        }
        Ok(spec)
    }

    pub fn check(&self) -> Result<(), BenchmarkError> {
        let mut names = HashSet::new();
        for s in &self.subsets {
            let bad = |m: &str| Err(BenchmarkError::Spec(format!("subset {:?}: {m}", s.name)));
            if s.name.is_empty() {
                return Err(BenchmarkError::Spec("subset with empty name".into()));
            }
            if !names.insert(&s.name) {
                return bad("duplicate name");
            }
            if s.target_size == Some(0) {
                return bad("target_size must be at least 1");
            }
            match s.source {
                SubsetSource::Reviewed => {
                    if s.candidates.is_none() || s.decisions.is_none() {
                        return bad("reviewed subsets need candidates and decisions");
                    }
                }
                SubsetSource::Stratified | SubsetSource::Mutation => {
                    if s.target_size.is_none() {
                        return bad("target_size is required");
                    }
                    if s.seed.or(self.seed).is_none() {
                        return bad("no seed given");
                    }
                }
            }
        }
        Ok(())
    }
}

/// Membership of one benchmark subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetManifest {
    pub name: String,
    pub ids: Vec<String>,
    pub provenance: SubsetProvenance,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SubsetProvenance {
    pub source: Option<SubsetSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<StratifyMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_size: Option<usize>,
    /// Drawn count per difficulty level.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_level: BTreeMap<DifficultyLevel, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decisions_digest: Option<String>,
}

fn derived_seed(seed: u64, tag: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    h.finalize().into()
}

/// Per-level quotas summing to exactly `target`. `available` is indexed like
/// [`DifficultyLevel::ALL`].
pub fn level_quotas(available: [usize; 5], target: usize, mode: StratifyMode) -> Result<[usize; 5], BenchmarkError> {
    let total: usize = available.iter().sum();
    if target == 0 {
        return Err(BenchmarkError::ZeroTarget);
    }
    if target > total {
        return Err(BenchmarkError::TargetTooLarge { target, available: total });
    }
    let mut quota = [0usize; 5];
    match mode {
        StratifyMode::Even => {
            // water-filling: hand out equal shares to levels with room left,
            // remainder one each in level order
            let mut remaining = target;
            while remaining > 0 {
                let open: Vec<usize> = (0..5).filter(|&i| quota[i] < available[i]).collect();
                let share = remaining / open.len();
                if share == 0 {
                    for &i in open.iter().take(remaining) {
                        quota[i] += 1;
                    }
                    break;
                }
                for &i in &open {
                    let take = share.min(available[i] - quota[i]);
                    quota[i] += take;
                    remaining -= take;
                }
            }
        }
        StratifyMode::Proportional => {
            // largest remainder on target * n_i / N
            let mut rems: Vec<(usize, usize)> = Vec::with_capacity(5);
            let mut assigned = 0;
            for i in 0..5 {
                let num = target * available[i];
                quota[i] = num / total;
                assigned += quota[i];
                rems.push((num % total, i));
            }
            rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            for &(_, i) in rems.iter().take(target - assigned) {
                quota[i] += 1;
            }
        }
    }
    Ok(quota)
}

/// Draws `target` instances spread over the difficulty levels, without
/// replacement. Each level is sampled with its own RNG derived from `seed`,
/// over ids sorted lexicographically, so the result depends only on the set
/// of (id, level) pairs, the target and the seed. Ids come back in input
/// order.
pub fn stratified_sample(
    name: &str,
    instances: &[&TextInstance],
    target: usize,
    seed: u64,
    mode: StratifyMode,
) -> Result<SubsetManifest, BenchmarkError> {
    let mut by_level: [Vec<&str>; 5] = Default::default();
    for inst in instances {
        let level = inst.difficulty.ok_or_else(|| BenchmarkError::Unassigned(inst.id.clone()))?;
        by_level[level as usize].push(&inst.id);
    }
    let available = by_level.each_ref().map(Vec::len);
    let quota = level_quotas(available, target, mode)?;

    let mut chosen: HashSet<&str> = HashSet::with_capacity(target);
    let mut per_level = BTreeMap::new();
    for (i, ids) in by_level.iter_mut().enumerate() {
        ids.sort_unstable();
        let level = DifficultyLevel::ALL[i];
        let mut rng = ChaCha8Rng::from_seed(derived_seed(seed, level.name()));
        for k in index::sample(&mut rng, ids.len(), quota[i]) {
            chosen.insert(ids[k]);
        }
        per_level.insert(level, quota[i]);
    }
    let ids = instances.iter().filter(|i| chosen.contains(i.id.as_str())).map(|i| i.id.clone()).collect();
    Ok(SubsetManifest {
        name: name.to_string(),
        ids,
        provenance: SubsetProvenance {
            source: Some(SubsetSource::Stratified),
            seed: Some(seed),
            mode: Some(mode),
            target_size: Some(target),
            per_level,
            ..Default::default()
        },
    })
}

/// Side removed from an instance, a pure function of `(seed, id)`.
pub fn choose_side(seed: u64, id: &str) -> Side {
    let mut rng = ChaCha8Rng::from_seed(derived_seed(seed, id));
    if rng.gen::<bool>() {
        Side::Left
    } else {
        Side::Right
    }
}

/// Links a mutated sample to its source for margin evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationPair {
    pub mutated_id: String,
    pub original_id: String,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationSkip {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MutatedSample {
    pub instance: TextInstance,
    pub png: Vec<u8>,
}

#[derive(Debug, Default)]
pub struct MutationOutcome {
    pub samples: Vec<MutatedSample>,
    pub pairs: Vec<MutationPair>,
    pub skipped: Vec<MutationSkip>,
}

pub fn mutated_id(original: &str) -> String {
    format!("{original}#incomplete")
}

/// File name for a mutated crop: the id with path-hostile bytes replaced.
pub fn mutated_file_name(original: &str) -> String {
    let safe: String =
        original.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect();
    format!("{safe}.incomplete.png")
}

/// Cuts one character off each word image, side chosen by [`choose_side`].
/// `load` returns the word image of an instance. Instances whose label is too
/// short, whose strip cannot be cut, or (with `require_easy`) that are not
/// easy are skipped with a reason. Work runs in parallel; output order is
/// input order. Mutated images are referenced as `{image_dir}/{file}`.
pub fn mutate_incomplete<F>(
    instances: &[TextInstance],
    seed: u64,
    require_easy: bool,
    image_dir: &str,
    load: F,
) -> MutationOutcome
where
    F: Fn(&TextInstance) -> Result<RasterImage, ImagingError> + Sync,
{
    let results: Vec<Result<(MutatedSample, MutationPair), MutationSkip>> = instances
        .par_iter()
        .map(|inst| {
            let skip = |reason: String| MutationSkip { id: inst.id.clone(), reason };
            if require_easy && inst.difficulty != Some(DifficultyLevel::Easy) {
                return Err(skip(format!(
                    "difficulty is {}, not easy",
                    inst.difficulty.map_or("unassigned", |d| d.name())
                )));
            }
            if inst.label.chars().count() < 2 {
                return Err(skip(format!("label {:?} is shorter than 2 characters", inst.label)));
            }
            let side = choose_side(seed, &inst.id);
            let img = load(inst).map_err(|e| skip(e.to_string()))?;
            let (cut, label) = crop_char_strip(&img, &inst.label, side).map_err(|e| skip(e.to_string()))?;
            let png = encode_png(&cut).map_err(|e| skip(e.to_string()))?;
            let id = mutated_id(&inst.id);
            let image_ref = if image_dir.is_empty() {
                mutated_file_name(&inst.id)
            } else {
                format!("{}/{}", image_dir.trim_end_matches('/'), mutated_file_name(&inst.id))
            };
            let mut out = TextInstance::new(
                id.clone(),
                inst.source_dataset.clone(),
                image_ref,
                Polygon::rect(0.0, 0.0, cut.width() as f64, cut.height() as f64),
                label,
            );
            out.language = inst.language.clone();
            out.difficulty = inst.difficulty;
            out.digest = Some(digest_bytes(&png));
            out.provenance = Some(Provenance {
                derived_from: Some(inst.id.clone()),
                operation: Some(format!("incomplete:{}", side.name())),
                ..Default::default()
            });
            Ok((MutatedSample { instance: out, png }, MutationPair { mutated_id: id, original_id: inst.id.clone(), side }))
        })
        .collect();
    let mut outcome = MutationOutcome::default();
    for r in results {
        match r {
            Ok((s, p)) => {
                outcome.samples.push(s);
                outcome.pairs.push(p);
            }
            Err(s) => outcome.skipped.push(s),
        }
    }
    outcome
}

/// A loaded review queue with its decision log.
#[derive(Debug, Clone, Default)]
pub struct ReviewInput {
    pub items: Vec<ReviewItem>,
    pub decisions: Vec<DecisionRecord>,
    pub queue: Option<String>,
    pub items_digest: Option<String>,
    pub decisions_digest: Option<String>,
}

impl ReviewInput {
    pub fn load(candidates: &Path, decisions: &Path, queue: Option<&str>) -> Result<Self, BenchmarkError> {
        let queue = queue
            .map(str::to_string)
            .or_else(|| candidates.file_stem().map(|s| s.to_string_lossy().into_owned()));
        Ok(ReviewInput {
            items: read_review_items(candidates)?,
            decisions: read_decisions(decisions)?,
            queue,
            items_digest: Some(digest_file(candidates)?),
            decisions_digest: Some(digest_file(decisions)?),
        })
    }

    /// Ids whose effective verdict is accept, in candidate order. Fails when
    /// any candidate has no decision at all.
    pub fn accepted(&self, subset: &str) -> Result<Vec<String>, BenchmarkError> {
        let relevant = self
            .decisions
            .iter()
            .filter(|d| match (&self.queue, &d.queue_id) {
                (Some(q), Some(dq)) => q == dq,
                _ => true,
            });
        let effective = effective_decisions(relevant);
        let missing: Vec<&str> =
            self.items.iter().filter(|i| !effective.contains_key(&i.item_id)).map(|i| i.item_id.as_str()).collect();
        if let Some(first) = missing.first() {
            return Err(BenchmarkError::MissingDecisions {
                subset: subset.to_string(),
                count: missing.len(),
                first: first.to_string(),
            });
        }
        Ok(self
            .items
            .iter()
            .filter(|i| effective[&i.item_id].verdict == Verdict::Accept)
            .map(|i| i.item_id.clone())
            .collect())
    }
}

/// Review inputs keyed by subset name, plus the training exclusion queues.
#[derive(Debug, Clone, Default)]
pub struct ReviewInputs {
    pub subsets: HashMap<String, ReviewInput>,
    pub exclusions: Vec<ReviewInput>,
}

impl ReviewInputs {
    pub fn load(spec: &BenchmarkSpec) -> Result<Self, BenchmarkError> {
        let mut out = ReviewInputs::default();
        for s in &spec.subsets {
            if let (SubsetSource::Reviewed, Some(c), Some(d)) = (s.source, &s.candidates, &s.decisions) {
                out.subsets.insert(s.name.clone(), ReviewInput::load(c, d, s.queue.as_deref())?);
            }
        }
        for e in &spec.exclusions {
            out.exclusions.push(ReviewInput::load(&e.candidates, &e.decisions, e.queue.as_deref())?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assembly {
    pub subsets: Vec<SubsetManifest>,
    /// Corpus ids left for training, in corpus order.
    pub train_ids: Vec<String>,
}

/// Builds every subset of `spec` in order. Later subsets never draw ids taken
/// by earlier ones; a reviewed subset that accepts an id already used
/// elsewhere is an error. The training split is the corpus minus all
/// benchmark ids, minus ids accepted on exclusion queues, minus (optionally)
/// instances sharing an image digest with the benchmark.
pub fn assemble(
    spec: &BenchmarkSpec,
    corpus: &[TextInstance],
    reviews: &ReviewInputs,
) -> Result<Assembly, BenchmarkError> {
    spec.check()?;
    let by_id: HashMap<&str, &TextInstance> = corpus.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut owner: HashMap<String, String> = HashMap::new();
    let mut subsets = Vec::with_capacity(spec.subsets.len());

    for s in &spec.subsets {
        let seed = s.seed.or(spec.seed);
        let manifest = match s.source {
            SubsetSource::Reviewed => {
                let input = reviews
                    .subsets
                    .get(&s.name)
                    .ok_or_else(|| BenchmarkError::Spec(format!("no review input loaded for {:?}", s.name)))?;
                let ids = input.accepted(&s.name)?;
                for id in &ids {
                    if !by_id.contains_key(id.as_str()) {
                        return Err(BenchmarkError::UnknownId { subset: s.name.clone(), id: id.clone() });
                    }
                }
                SubsetManifest {
                    name: s.name.clone(),
                    ids,
                    provenance: SubsetProvenance {
                        source: Some(SubsetSource::Reviewed),
                        target_size: s.target_size,
                        candidates_digest: input.items_digest.clone(),
                        decisions_digest: input.decisions_digest.clone(),
                        ..Default::default()
                    },
                }
            }
            SubsetSource::Stratified => {
                let pool: Vec<&TextInstance> = corpus.iter().filter(|i| !owner.contains_key(&i.id)).collect();
                let target = s.target_size.expect("checked");
                stratified_sample(&s.name, &pool, target, seed.expect("checked"), s.mode)?
            }
            SubsetSource::Mutation => {
                let pool: Vec<&TextInstance> = corpus
                    .iter()
                    .filter(|i| {
                        !owner.contains_key(&i.id)
                            && i.difficulty == Some(DifficultyLevel::Easy)
                            && i.label.chars().count() >= 2
                    })
                    .collect();
                let target = s.target_size.expect("checked");
                let seed = seed.expect("checked");
                let mut sorted: Vec<&str> = pool.iter().map(|i| i.id.as_str()).collect();
                sorted.sort_unstable();
                if target > sorted.len() {
                    return Err(BenchmarkError::TargetTooLarge { target, available: sorted.len() });
                }
                let mut rng = ChaCha8Rng::from_seed(derived_seed(seed, "mutation"));
                let chosen: HashSet<&str> = index::sample(&mut rng, sorted.len(), target).into_iter().map(|k| sorted[k]).collect();
                SubsetManifest {
                    name: s.name.clone(),
                    ids: pool.iter().filter(|i| chosen.contains(i.id.as_str())).map(|i| i.id.clone()).collect(),
                    provenance: SubsetProvenance {
                        source: Some(SubsetSource::Mutation),
                        seed: Some(seed),
                        target_size: Some(target),
                        per_level: [(DifficultyLevel::Easy, target)].into(),
                        ..Default::default()
                    },
                }
            }
        };
        for id in &manifest.ids {
            if let Some(first) = owner.insert(id.clone(), s.name.clone()) {
                return Err(BenchmarkError::IdCollision { id: id.clone(), first, second: s.name.clone() });
            }
        }
        subsets.push(manifest);
    }

    let mut excluded: HashSet<String> = HashSet::new();
    for (k, input) in reviews.exclusions.iter().enumerate() {
        excluded.extend(input.accepted(&format!("exclusion #{}", k + 1))?);
    }
    let shared: HashSet<&str> = if spec.exclude_shared_images {
        owner.keys().filter_map(|id| by_id.get(id.as_str()).and_then(|i| i.digest.as_deref())).collect()
    } else {
        HashSet::new()
    };
    let train_ids: Vec<String> = corpus
        .iter()
        .filter(|i| {
            !owner.contains_key(&i.id)
                && !excluded.contains(&i.id)
                && !i.digest.as_deref().is_some_and(|d| shared.contains(d))
        })
        .map(|i| i.id.clone())
        .collect();
    let assembly = Assembly { subsets, train_ids };
    assembly.check_disjoint()?;
    Ok(assembly)
}

impl Assembly {
    /// Asserts the training split shares no id with any subset.
    pub fn check_disjoint(&self) -> Result<(), BenchmarkError> {
        let train: HashSet<&str> = self.train_ids.iter().map(String::as_str).collect();
        for s in &self.subsets {
            if let Some(id) = s.ids.iter().find(|id| train.contains(id.as_str())) {
                return Err(BenchmarkError::IdCollision { id: id.clone(), first: s.name.clone(), second: "train".into() });
            }
        }
        Ok(())
    }
}
