//! Multi-detector consensus: keep a region only when every detector found it
//! and all of their polygons overlap each other strongly, then emit the
//! bounding box of the agreeing polygons.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{min_aabb, polygon_iou, Aabb, Polygon};
use crate::manifest::{DetectionSet, Provenance, TextInstance};

#[derive(Debug, Error, PartialEq)]
pub enum VotingError {
    #[error("detection sets refer to different images ({0:?} and {1:?})")]
    MismatchedImages(String, String),
    #[error("need at least 2 detectors, got {0}")]
    TooFewDetectors(usize),
    #[error("detector {0:?} appears twice for the same image")]
    DuplicateDetector(String),
    #[error("iou threshold must be in (0, 1], got {0}")]
    BadThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    pub iou_threshold: f64,
    /// Groups must contain one region from every detector.
    pub require_all_detectors: bool,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig { iou_threshold: 0.7, require_all_detectors: true }
    }
}

impl ConsensusConfig {
    pub fn new(iou_threshold: f64, require_all_detectors: bool) -> Result<Self, VotingError> {
        if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
            return Err(VotingError::BadThreshold(iou_threshold));
        }
        Ok(ConsensusConfig { iou_threshold, require_all_detectors })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMember {
    pub detector_id: String,
    pub region_index: usize,
    pub polygon: Polygon,
}

/// Regions from distinct detectors that were matched together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateGroup {
    pub image_ref: String,
    /// Number of detectors that ran on the image.
    pub detector_count: usize,
    /// One per detector, in detector order.
    pub members: Vec<GroupMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusRegion {
    pub image_ref: String,
    #[serde(rename = "box")]
    pub bbox: Aabb,
    /// IoU of each member pair, in (i, j) lexicographic order.
    pub member_ious: Vec<f64>,
    pub detector_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Rejection {
    MissingDetectors { present: usize, required: usize },
    BelowThreshold { min_iou: f64, threshold: f64 },
}

fn iou_or_zero(a: &Polygon, b: &Polygon) -> f64 {
    polygon_iou(a, b).unwrap_or(0.0)
}

/// Groups regions across detectors by greedy descending-IoU matching.
///
/// All cross-detector pairs with positive IoU are visited from the highest
/// IoU down; a pair joins (or merges) groups when the result still holds at
/// most one region per detector and every pair inside it overlaps. Each region
/// ends up in at most one group. Groups of fewer than two regions are dropped,
/// and with `require_all_detectors` only complete groups are returned.
pub fn match_detections(sets: &[DetectionSet], cfg: &ConsensusConfig) -> Result<Vec<CandidateGroup>, VotingError> {
    if sets.len() < 2 {
        return Err(VotingError::TooFewDetectors(sets.len()));
    }
    let image_ref = &sets[0].image_ref;
    let mut seen = BTreeSet::new();
    for s in sets {
        if &s.image_ref != image_ref {
            return Err(VotingError::MismatchedImages(image_ref.clone(), s.image_ref.clone()));
        }
        if !seen.insert(&s.detector_id) {
            return Err(VotingError::DuplicateDetector(s.detector_id.clone()));
        }
    }

    // flat region list: (detector index, region index)
    let regions: Vec<(usize, usize)> =
        sets.iter().enumerate().flat_map(|(d, s)| (0..s.regions.len()).map(move |r| (d, r))).collect();
    let poly = |k: usize| &sets[regions[k].0].regions[regions[k].1];

    let n = regions.len();
    let mut iou = vec![0.0f64; n * n];
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if regions[a].0 == regions[b].0 {
                continue;
            }
            let v = iou_or_zero(poly(a), poly(b));
            iou[a * n + b] = v;
            iou[b * n + a] = v;
            if v > 0.0 {
                pairs.push((v, a, b));
            }
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

    let mut group_of: Vec<Option<usize>> = vec![None; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let compatible = |g: &[usize], h: &[usize]| {
        g.iter().all(|&x| h.iter().all(|&y| regions[x].0 != regions[y].0 && iou[x * n + y] > 0.0))
    };
    for (_, a, b) in pairs {
        match (group_of[a], group_of[b]) {
            (None, None) => {
                group_of[a] = Some(groups.len());
                group_of[b] = Some(groups.len());
                groups.push(vec![a, b]);
            }
            (Some(g), None) | (None, Some(g)) => {
                let x = if group_of[a].is_none() { a } else { b };
                if compatible(&groups[g], &[x]) {
                    groups[g].push(x);
                    group_of[x] = Some(g);
                }
            }
            (Some(g), Some(h)) if g != h && compatible(&groups[g], &groups[h]) => {
                let moved = std::mem::take(&mut groups[h]);
                for &x in &moved {
                    group_of[x] = Some(g);
                }
                groups[g].extend(moved);
            }
            _ => {}
        }
    }

    let k = sets.len();
    let mut out: Vec<Vec<usize>> = groups
        .into_iter()
        .filter(|g| g.len() >= 2 && (!cfg.require_all_detectors || g.len() == k))
        .map(|mut g| {
            g.sort_unstable();
            g
        })
        .collect();
    out.sort();
    Ok(out
        .into_iter()
        .map(|g| CandidateGroup {
            image_ref: image_ref.clone(),
            detector_count: k,
            members: g
                .into_iter()
                .map(|x| GroupMember {
                    detector_id: sets[regions[x].0].detector_id.clone(),
                    region_index: regions[x].1,
                    polygon: poly(x).clone(),
                })
                .collect(),
        })
        .collect())
}

/// Accepts a group iff every pair of members has IoU strictly above the
/// threshold (and, when required, every detector contributed a member).
pub fn consensus_filter(group: &CandidateGroup, cfg: &ConsensusConfig) -> Result<ConsensusRegion, Rejection> {
    let m = &group.members;
    let required = if cfg.require_all_detectors { group.detector_count.max(2) } else { 2 };
    if m.len() < required {
        return Err(Rejection::MissingDetectors { present: m.len(), required });
    }
    let mut ious = Vec::with_capacity(m.len() * (m.len() - 1) / 2);
    for i in 0..m.len() {
        for j in (i + 1)..m.len() {
            ious.push(iou_or_zero(&m[i].polygon, &m[j].polygon));
        }
    }
    let min_iou = ious.iter().copied().fold(f64::INFINITY, f64::min);
    if min_iou <= cfg.iou_threshold {
        return Err(Rejection::BelowThreshold { min_iou, threshold: cfg.iou_threshold });
    }
    let bbox = min_aabb(m.iter().map(|x| &x.polygon)).expect("group has members");
    Ok(ConsensusRegion {
        image_ref: group.image_ref.clone(),
        bbox,
        member_ious: ious,
        detector_ids: m.iter().map(|x| x.detector_id.clone()).collect(),
    })
}

/// Runs matching and filtering over detection sets for many images.
///
/// The detector roster is the set of all `detector_id`s in the input; an
/// image a detector produced no record for counts as an empty detection.
/// Images are processed in parallel and results are returned in order of
/// each image's first appearance.
pub fn harvest(sets: &[DetectionSet], cfg: &ConsensusConfig) -> Result<Vec<ConsensusRegion>, VotingError> {
    let detectors: BTreeSet<&str> = sets.iter().map(|s| s.detector_id.as_str()).collect();
    if detectors.len() < 2 {
        return Err(VotingError::TooFewDetectors(detectors.len()));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut by_image: BTreeMap<&str, BTreeMap<&str, DetectionSet>> = BTreeMap::new();
    for s in sets {
        let per = by_image.entry(s.image_ref.as_str()).or_insert_with(|| {
            order.push(s.image_ref.as_str());
            BTreeMap::new()
        });
        let entry = per.entry(s.detector_id.as_str()).or_insert_with(|| DetectionSet {
            detector_id: s.detector_id.clone(),
            image_ref: s.image_ref.clone(),
            regions: Vec::new(),
        });
        // several records for one (detector, image) are concatenated
        entry.regions.extend(s.regions.iter().cloned());
    }

    let per_image: Vec<Vec<ConsensusRegion>> = order
        .par_iter()
        .map(|img| {
            let present = &by_image[img];
            let full: Vec<DetectionSet> = detectors
                .iter()
                .map(|d| {
                    present.get(d).cloned().unwrap_or_else(|| DetectionSet {
                        detector_id: d.to_string(),
                        image_ref: img.to_string(),
                        regions: Vec::new(),
                    })
                })
                .collect();
            let groups = match_detections(&full, cfg)?;
            Ok(groups.iter().filter_map(|g| consensus_filter(g, cfg).ok()).collect())
        })
        .collect::<Result<_, VotingError>>()?;
    Ok(per_image.into_iter().flatten().collect())
}

/// Pseudo-labeled instances (empty label, not ignored) for accepted regions.
/// Ids are `{image_ref}#pseudo{n}` with `n` counting per image from 0.
pub fn to_pseudo_instances(regions: &[ConsensusRegion], source_dataset: &str) -> Vec<TextInstance> {
    let mut counters: BTreeMap<&str, usize> = BTreeMap::new();
    regions
        .iter()
        .map(|r| {
            let n = counters.entry(r.image_ref.as_str()).or_insert(0);
            let id = format!("{}#pseudo{}", r.image_ref, n);
            *n += 1;
            let mut inst = TextInstance::new(id, source_dataset, r.image_ref.clone(), r.bbox.to_polygon(), "");
            inst.provenance = Some(Provenance {
                pseudo: true,
                detector_ids: r.detector_ids.clone(),
                member_ious: r.member_ious.clone(),
                ..Default::default()
            });
            inst
        })
        .collect()
}
