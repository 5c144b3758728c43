//! Record types and line-delimited JSON I/O.
//!
//! Every file is UTF-8 with one JSON object per line. Field order on output is
//! the declaration order of the structs below, so a read followed by a write
//! reproduces a file this crate wrote. Field names are listed in
//! `docs/schema.md`.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::difficulty::DifficultyLevel;
use crate::geometry::Polygon;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: duplicate id {id:?}")]
    DuplicateId { path: PathBuf, line: usize, id: String },
    #[error("record {id:?} is invalid: {violations:?}")]
    Invalid { id: String, violations: Vec<Violation> },
    #[error("{0}")]
    Format(String),
}

impl ManifestError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ManifestError::Io { path: path.to_path_buf(), source }
    }
}

pub type Result<T, E = ManifestError> = std::result::Result<T, E>;

fn default_language() -> String {
    "latin".to_string()
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Where a record came from when it was not hand-annotated.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "is_false")]
    pub pseudo: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub detector_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub member_ious: Vec<f64>,
    /// Id of the instance this one was derived from (crop, mutation).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived_from: Option<String>,
    /// Free-form operation tag, e.g. `"crop:axis"` or `"incomplete:left"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operation: Option<String>,
}

/// One annotated text region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextInstance {
    pub id: String,
    pub source_dataset: String,
    pub image_ref: String,
    pub polygon: Polygon,
    pub label: String,
    #[serde(default)]
    pub ignored: bool,
    #[serde(default = "default_language")]
    pub language: String,
    /// Image identifier in the source dataset (e.g. an OpenImages id).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_image_id: Option<String>,
    /// Hex SHA-256 of the referenced image bytes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<DifficultyLevel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl TextInstance {
    pub fn new(
        id: impl Into<String>,
        source_dataset: impl Into<String>,
        image_ref: impl Into<String>,
        polygon: Polygon,
        label: impl Into<String>,
    ) -> Self {
        TextInstance {
            id: id.into(),
            source_dataset: source_dataset.into(),
            image_ref: image_ref.into(),
            polygon,
            label: label.into(),
            ignored: false,
            language: default_language(),
            source_image_id: None,
            digest: None,
            difficulty: None,
            provenance: None,
        }
    }

    pub fn is_pseudo(&self) -> bool {
        self.provenance.as_ref().is_some_and(|p| p.pseudo)
    }
}

/// All regions one detector found on one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub detector_id: String,
    pub image_ref: String,
    pub regions: Vec<Polygon>,
}

/// One recognizer's output: sample id to predicted string.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictionManifest {
    pub model_id: String,
    pub predictions: BTreeMap<String, String>,
}

/// A single line of `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub model_id: String,
    pub sample_id: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
    Skip,
}

impl std::str::FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "accept" => Ok(Verdict::Accept),
            "reject" => Ok(Verdict::Reject),
            "skip" => Ok(Verdict::Skip),
            other => Err(format!("unknown verdict {other:?} (expected accept, reject or skip)")),
        }
    }
}

/// One reviewer decision. The effective verdict for an item is the one with
/// the latest timestamp; ties go to the later log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queue_id: Option<String>,
    pub item_id: String,
    pub verdict: Verdict,
    pub reviewer: String,
    /// UTC seconds since the epoch.
    pub timestamp: i64,
}

/// A candidate awaiting human review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub item_id: String,
    pub image_ref: String,
    pub label: String,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbnail_ref: Option<String>,
}

/// Reduces a decision log to one verdict per item (last write wins).
pub fn effective_decisions<'a, I>(log: I) -> BTreeMap<String, DecisionRecord>
where
    I: IntoIterator<Item = &'a DecisionRecord>,
{
    let mut out: BTreeMap<String, DecisionRecord> = BTreeMap::new();
    for d in log {
        match out.get(&d.item_id) {
            Some(prev) if prev.timestamp > d.timestamp => {}
            _ => {
                out.insert(d.item_id.clone(), d.clone());
            }
        }
    }
    out
}

/// A broken invariant on a record field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: &str, rule: impl Into<String>) -> Self {
        Violation { field: field.to_string(), rule: rule.into() }
    }
}

/// Records with invariants checked on read and write.
pub trait Validate {
    fn record_id(&self) -> String;
    fn violations(&self) -> Vec<Violation>;
}

/// Checks every `TextInstance` invariant. Empty means valid.
pub fn validate(instance: &TextInstance) -> Vec<Violation> {
    let mut v = Vec::new();
    if instance.id.trim().is_empty() {
        v.push(Violation::new("id", "must be nonempty"));
    }
    if instance.image_ref.is_empty() {
        v.push(Violation::new("image_ref", "must be nonempty"));
    }
    if let Err(e) = instance.polygon.validate(true) {
        v.push(Violation::new("polygon", e.to_string()));
    }
    // pseudo-labeled regions carry no transcription yet
    if instance.label.is_empty() && !instance.ignored && !instance.is_pseudo() {
        v.push(Violation::new("label", "may be empty only when ignored"));
    }
    if let Some(d) = &instance.digest {
        if d.len() != 64 || !d.bytes().all(|b| b.is_ascii_hexdigit()) {
            v.push(Violation::new("digest", "must be 64 hex characters"));
        }
    }
    v
}

impl Validate for TextInstance {
    fn record_id(&self) -> String {
        self.id.clone()
    }

    fn violations(&self) -> Vec<Violation> {
        validate(self)
    }
}

impl Validate for DetectionSet {
    fn record_id(&self) -> String {
        format!("{}@{}", self.detector_id, self.image_ref)
    }

    fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.detector_id.is_empty() {
            v.push(Violation::new("detector_id", "must be nonempty"));
        }
        for (i, r) in self.regions.iter().enumerate() {
            if let Err(e) = r.validate(false) {
                v.push(Violation::new(&format!("regions[{i}]"), e.to_string()));
            }
        }
        v
    }
}

impl Validate for PredictionRecord {
    fn record_id(&self) -> String {
        format!("{}/{}", self.model_id, self.sample_id)
    }

    fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.model_id.is_empty() {
            v.push(Violation::new("model_id", "must be nonempty"));
        }
        if self.sample_id.is_empty() {
            v.push(Violation::new("sample_id", "must be nonempty"));
        }
        v
    }
}

impl Validate for DecisionRecord {
    fn record_id(&self) -> String {
        self.item_id.clone()
    }

    fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.item_id.is_empty() {
            v.push(Violation::new("item_id", "must be nonempty"));
        }
        if self.reviewer.is_empty() {
            v.push(Violation::new("reviewer", "must be nonempty"));
        }
        v
    }
}

impl Validate for ReviewItem {
    fn record_id(&self) -> String {
        self.item_id.clone()
    }

    fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.item_id.is_empty() {
            v.push(Violation::new("item_id", "must be nonempty"));
        }
        if self.reason.is_empty() {
            v.push(Violation::new("reason", "must be nonempty"));
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReadMode {
    /// Any malformed or invalid line aborts the read.
    #[default]
    Strict,
    /// Malformed or invalid lines are reported and skipped.
    Lenient,
}

/// A skipped line in lenient mode.
#[derive(Debug, Clone, PartialEq)]
pub struct LineIssue {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ReadOutcome<T> {
    pub records: Vec<T>,
    pub issues: Vec<LineIssue>,
}

fn parse_line<T: DeserializeOwned + Validate>(text: &str) -> std::result::Result<T, String> {
    let rec: T = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let violations = rec.violations();
    if !violations.is_empty() {
        let msg = violations.iter().map(|v| format!("{}: {}", v.field, v.rule)).collect::<Vec<_>>().join("; ");
        return Err(msg);
    }
    Ok(rec)
}

/// Reads a JSONL file of records in file order. Blank lines are ignored.
/// `unique_ids` turns duplicate [`Validate::record_id`]s into a fatal error.
pub fn read_jsonl<T>(path: &Path, mode: ReadMode, unique_ids: bool) -> Result<ReadOutcome<T>>
where
    T: DeserializeOwned + Validate + Send,
{
    let file = File::open(path).map_err(|e| ManifestError::io(path, e))?;
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ManifestError::io(path, e))?;
        if !line.trim().is_empty() {
            lines.push((i + 1, line));
        }
    }
    // parse in parallel; collect keeps file order
    let parsed: Vec<(usize, std::result::Result<T, String>)> =
        lines.par_iter().map(|(n, text)| (*n, parse_line::<T>(text))).collect();

    let mut records = Vec::with_capacity(parsed.len());
    let mut issues = Vec::new();
    let mut seen = HashSet::new();
    for (line, rec) in parsed {
        match rec {
            Ok(rec) => {
                if unique_ids && !seen.insert(rec.record_id()) {
                    return Err(ManifestError::DuplicateId { path: path.to_path_buf(), line, id: rec.record_id() });
                }
                records.push(rec);
            }
            Err(message) => match mode {
                ReadMode::Strict => {
                    return Err(ManifestError::Malformed { path: path.to_path_buf(), line, message })
                }
                ReadMode::Lenient => issues.push(LineIssue { line, message }),
            },
        }
    }
    Ok(ReadOutcome { records, issues })
}

/// Validates every record, then writes them atomically (temp file + rename).
/// Nothing is written if any record is invalid.
pub fn write_jsonl<'a, T, I>(records: I, path: &Path) -> Result<usize>
where
    T: Serialize + Validate + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let records: Vec<&T> = records.into_iter().collect();
    for r in &records {
        let violations = r.violations();
        if !violations.is_empty() {
            return Err(ManifestError::Invalid { id: r.record_id(), violations });
        }
    }
    write_jsonl_unchecked(records, path)
}

/// Atomic JSONL write without invariant checks, for auxiliary records
/// (drop reasons, subset manifests) that carry no [`Validate`] impl.
pub fn write_jsonl_unchecked<'a, T, I>(records: I, path: &Path) -> Result<usize>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| ManifestError::io(dir, e))?;
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| ManifestError::io(dir, e))?;
    let mut count = 0;
    {
        let mut w = BufWriter::new(tmp.as_file());
        for r in records {
            serde_json::to_writer(&mut w, r).map_err(|e| ManifestError::Format(e.to_string()))?;
            w.write_all(b"\n").map_err(|e| ManifestError::io(path, e))?;
            count += 1;
        }
        w.flush().map_err(|e| ManifestError::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| ManifestError::io(path, e.error))?;
    Ok(count)
}

/// Reads `instances.jsonl`. Duplicate ids are fatal in both modes.
pub fn read_corpus(path: &Path, mode: ReadMode) -> Result<ReadOutcome<TextInstance>> {
    read_jsonl(path, mode, true)
}

pub fn write_corpus<'a, I>(instances: I, path: &Path) -> Result<usize>
where
    I: IntoIterator<Item = &'a TextInstance>,
{
    write_jsonl(instances, path)
}

pub fn read_detections(path: &Path, mode: ReadMode) -> Result<ReadOutcome<DetectionSet>> {
    read_jsonl(path, mode, true)
}

/// Reads one or more models' predictions, grouped by `model_id` in order of
/// first appearance. A sample predicted twice by the same model is an error.
pub fn read_predictions(path: &Path) -> Result<Vec<PredictionManifest>> {
    let outcome = read_jsonl::<PredictionRecord>(path, ReadMode::Strict, true)?;
    let mut order: Vec<String> = Vec::new();
    let mut by_model: BTreeMap<String, PredictionManifest> = BTreeMap::new();
    for rec in outcome.records {
        let m = by_model.entry(rec.model_id.clone()).or_insert_with(|| {
            order.push(rec.model_id.clone());
            PredictionManifest { model_id: rec.model_id.clone(), predictions: BTreeMap::new() }
        });
        m.predictions.insert(rec.sample_id, rec.text);
    }
    Ok(order.into_iter().filter_map(|id| by_model.remove(&id)).collect())
}

pub fn write_predictions(manifest: &PredictionManifest, path: &Path) -> Result<usize> {
    let records: Vec<PredictionRecord> = manifest
        .predictions
        .iter()
        .map(|(k, v)| PredictionRecord { model_id: manifest.model_id.clone(), sample_id: k.clone(), text: v.clone() })
        .collect();
    write_jsonl(&records, path)
}

pub fn read_decisions(path: &Path) -> Result<Vec<DecisionRecord>> {
    Ok(read_jsonl(path, ReadMode::Strict, false)?.records)
}

pub fn read_review_items(path: &Path) -> Result<Vec<ReviewItem>> {
    Ok(read_jsonl(path, ReadMode::Strict, true)?.records)
}

/// Hex SHA-256 of a byte stream.
pub fn digest_reader<R: Read>(mut r: R) -> std::io::Result<String> {
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn digest_file(path: &Path) -> Result<String> {
    let f = File::open(path).map_err(|e| ManifestError::io(path, e))?;
    digest_reader(BufReader::new(f)).map_err(|e| ManifestError::io(path, e))
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Resolves an `image_ref` against an optional image root.
pub fn resolve_image(image_root: Option<&Path>, image_ref: &str) -> PathBuf {
    let p = Path::new(image_ref);
    match image_root {
        Some(root) if p.is_relative() => root.join(p),
        _ => p.to_path_buf(),
    }
}

/// Fills `digest` for every instance lacking one. Each distinct image is
/// hashed once; hashing runs in parallel and the result does not depend on
/// the worker count.
pub fn attach_digests(instances: &mut [TextInstance], image_root: Option<&Path>) -> Result<()> {
    let mut refs: Vec<&str> =
        instances.iter().filter(|i| i.digest.is_none()).map(|i| i.image_ref.as_str()).collect();
    refs.sort_unstable();
    refs.dedup();
    let digests: Vec<(String, String)> = refs
        .par_iter()
        .map(|r| digest_file(&resolve_image(image_root, r)).map(|d| (r.to_string(), d)))
        .collect::<Result<_>>()?;
    let table: BTreeMap<String, String> = digests.into_iter().collect();
    for inst in instances.iter_mut().filter(|i| i.digest.is_none()) {
        inst.digest = table.get(&inst.image_ref).cloned();
    }
    Ok(())
}

pub mod adapters {
    //! Import converters for two external annotation layouts.
    //!
    //! * ICDAR-style text: one file per image, one region per line,
    //!   `x1,y1,...,xn,yn,transcription`; a transcription of `###` marks the
    //!   region as ignored. A UTF-8 BOM is tolerated.
    //! * COCO-style JSON: `images[] {id, file_name}` and
    //!   `annotations[] {id, image_id, ...}` where the region is taken from
    //!   `mask` or `segmentation` (flat coordinate list) or else `bbox`
    //!   (`[x, y, w, h]`), the text from `utf8_string` or `text`, and
    //!   `legibility: "illegible"` or `ignore: true` marks it ignored.

    use super::*;
    use crate::geometry::Point;

    fn polygon_from_flat(coords: &[f64]) -> std::result::Result<Polygon, String> {
        if !coords.len().is_multiple_of(2) {
            return Err(format!("odd number of coordinates ({})", coords.len()));
        }
        Ok(Polygon::new(coords.chunks(2).map(|c| Point::new(c[0], c[1])).collect()))
    }

    /// Parses an ICDAR-style ground-truth text. Ids are `{prefix}_{line}`.
    pub fn parse_icdar(
        text: &str,
        dataset: &str,
        image_ref: &str,
        id_prefix: &str,
    ) -> std::result::Result<Vec<TextInstance>, String> {
        let mut out = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim_start_matches('\u{feff}').trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            // leading numeric fields are coordinates; the rest (commas allowed) is text
            let n_coords = fields.iter().take_while(|f| f.trim().parse::<f64>().is_ok()).count();
            let n_coords = n_coords - n_coords % 2;
            if n_coords < 6 || n_coords == fields.len() {
                return Err(format!("line {}: expected at least 3 vertices and a transcription", n + 1));
            }
            let coords: Vec<f64> = fields[..n_coords].iter().map(|f| f.trim().parse().unwrap()).collect();
            let label = fields[n_coords..].join(",");
            let polygon = polygon_from_flat(&coords).map_err(|e| format!("line {}: {e}", n + 1))?;
            let ignored = label == "###";
            let mut inst = TextInstance::new(
                format!("{id_prefix}_{}", n + 1),
                dataset,
                image_ref,
                polygon,
                if ignored { String::new() } else { label },
            );
            inst.ignored = ignored;
            out.push(inst);
        }
        Ok(out)
    }

    #[derive(Deserialize)]
    struct CocoImage {
        id: serde_json::Value,
        file_name: String,
    }

    #[derive(Deserialize)]
    struct CocoAnnotation {
        id: serde_json::Value,
        image_id: serde_json::Value,
        #[serde(default)]
        mask: Option<Vec<f64>>,
        #[serde(default)]
        segmentation: Option<serde_json::Value>,
        #[serde(default)]
        bbox: Option<[f64; 4]>,
        #[serde(default)]
        utf8_string: Option<String>,
        #[serde(default)]
        text: Option<String>,
        #[serde(default)]
        legibility: Option<String>,
        #[serde(default)]
        ignore: Option<bool>,
        #[serde(default)]
        language: Option<String>,
    }

    #[derive(Deserialize)]
    struct CocoFile {
        images: Vec<CocoImage>,
        annotations: Vec<CocoAnnotation>,
    }

    fn key(v: &serde_json::Value) -> String {
        match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }

    /// Parses a COCO-style document. Output follows annotation order.
    pub fn parse_coco(json: &str, dataset: &str) -> std::result::Result<Vec<TextInstance>, String> {
        let doc: CocoFile = serde_json::from_str(json).map_err(|e| e.to_string())?;
        let images: BTreeMap<String, String> =
            doc.images.iter().map(|i| (key(&i.id), i.file_name.clone())).collect();
        let mut out = Vec::with_capacity(doc.annotations.len());
        for ann in doc.annotations {
            let image_key = key(&ann.image_id);
            let file = images.get(&image_key).ok_or_else(|| format!("annotation {} refers to unknown image {image_key}", key(&ann.id)))?;
            let flat: Option<Vec<f64>> = match (&ann.mask, &ann.segmentation) {
                (Some(m), _) if !m.is_empty() => Some(m.clone()),
                (_, Some(serde_json::Value::Array(a))) if !a.is_empty() => {
                    // either [x, y, ...] or [[x, y, ...]]
                    let first = if a[0].is_array() { a[0].as_array().cloned().unwrap_or_default() } else { a.clone() };
                    Some(first.iter().filter_map(|v| v.as_f64()).collect())
                }
                _ => None,
            };
            let polygon = match (flat, ann.bbox) {
                (Some(f), _) => polygon_from_flat(&f)?,
                (None, Some([x, y, w, h])) => Polygon::rect(x, y, x + w, y + h),
                (None, None) => return Err(format!("annotation {} has no region", key(&ann.id))),
            };
            let label = ann.utf8_string.or(ann.text).unwrap_or_default();
            let ignored = ann.ignore.unwrap_or(false)
                || ann.legibility.as_deref() == Some("illegible")
                || label == "###";
            let mut inst = TextInstance::new(
                format!("{dataset}_{}", key(&ann.id)),
                dataset,
                file.clone(),
                polygon,
                if label == "###" { String::new() } else { label },
            );
            inst.ignored = ignored;
            inst.source_image_id = Some(image_key);
            if let Some(lang) = ann.language {
                inst.language = lang.to_lowercase();
            }
            out.push(inst);
        }
        Ok(out)
    }
}
