use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use sceneset_core::benchmark::{self, BenchmarkSpec, ReviewInputs, SubsetManifest};
use sceneset_core::consolidate::{self, Dropped, Removed};
use sceneset_core::difficulty::{self, DifficultyLevel};
use sceneset_core::geometry::{min_aabb, min_rotated_rect, Polygon};
use sceneset_core::imaging::{crop_axis_aligned, crop_rotated, encode_png, load_image};
use sceneset_core::manifest::{
    self, adapters, attach_digests, digest_bytes, digest_file, read_corpus, read_detections, read_predictions,
    resolve_image, PredictionManifest, ReadMode, TextInstance,
};
use sceneset_core::metrics::{self, MetricReport, NormalizationMode, SubsetAccuracy};
use sceneset_core::voting;
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::config::Settings;
use crate::UsageError;

/// Writes outputs unless in dry-run mode, and records provenance sidecars.
pub struct Ctx {
    pub settings: Settings,
    pub stage: &'static str,
}

#[derive(Serialize)]
struct InputRecord {
    file: String,
    sha256: String,
}

impl Ctx {
    fn dry(&self) -> bool {
        self.settings.dry_run
    }

    fn write_instances(&self, path: &Path, records: &[TextInstance]) -> Result<()> {
        if self.dry() {
            for r in records {
                let v = manifest::validate(r);
                if !v.is_empty() {
                    bail!("record {:?} is invalid: {v:?}", r.id);
                }
            }
            eprintln!("dry run: would write {} instances to {}", records.len(), path.display());
            return Ok(());
        }
        manifest::write_corpus(records, path)?;
        Ok(())
    }

    fn write_lines<T: Serialize>(&self, path: &Path, records: &[T]) -> Result<()> {
        if self.dry() {
            eprintln!("dry run: would write {} records to {}", records.len(), path.display());
            return Ok(());
        }
        manifest::write_jsonl_unchecked(records, path)?;
        Ok(())
    }

    fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<()> {
        if self.dry() {
            eprintln!("dry run: would write {}", path.display());
            return Ok(());
        }
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        write_file(path, text.as_bytes())
    }

    fn write_bytes(&self, path: &Path, bytes: &[u8]) -> Result<()> {
        if self.dry() {
            return Ok(());
        }
        write_file(path, bytes)
    }

    /// `<out>.provenance.json`: stage, seed, parameters and input digests.
    /// Inputs are named by file name only so that runs in different
    /// directories produce identical records.
    fn provenance(&self, out: &Path, inputs: &[&Path], params: serde_json::Value) -> Result<()> {
        let inputs = inputs
            .iter()
            .filter(|p| p.is_file())
            .map(|p| {
                Ok(InputRecord {
                    file: p.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
                    sha256: digest_file(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let record = json!({
            "stage": self.stage,
            "seed": self.settings.seed,
            "parameters": params,
            "inputs": inputs,
        });
        self.write_json(&sidecar(out, "provenance.json"), &record)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// `instances.jsonl` + `drops.jsonl` -> `instances.jsonl.drops.jsonl`.
fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(suffix);
    out.with_file_name(name)
}

fn load_corpus(path: &Path) -> Result<Vec<TextInstance>> {
    Ok(read_corpus(path, ReadMode::Strict)?.records)
}

fn list_inputs(inputs: &[PathBuf], ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == ext))
                .collect();
            found.sort();
            out.extend(found);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            return Err(UsageError(format!("input {} does not exist", p.display())).into());
        }
    }
    Ok(out)
}

pub fn ingest(ctx: &Ctx, a: &IngestArgs) -> Result<()> {
    let ext = match a.format {
        InputFormat::Icdar => "txt",
        InputFormat::Coco => "json",
        InputFormat::Jsonl => "jsonl",
    };
    if a.format != InputFormat::Jsonl && a.dataset.is_none() {
        return Err(UsageError("--dataset is required for icdar and coco input".into()).into());
    }
    let files = list_inputs(&a.inputs, ext)?;
    let dataset = a.dataset.clone().unwrap_or_default();
    let mut all = Vec::new();
    for f in &files {
        let mut batch = match a.format {
            InputFormat::Icdar => {
                let text = std::fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
                let stem = f.file_stem().unwrap_or_default().to_string_lossy();
                let base = stem.strip_prefix("gt_").unwrap_or(&stem);
                let image_ref = format!("{base}.{}", a.image_ext);
                adapters::parse_icdar(&text, &dataset, &image_ref, &format!("{dataset}/{base}"))
                    .map_err(|e| anyhow::anyhow!("{}: {e}", f.display()))?
            }
            InputFormat::Coco => {
                let text = std::fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
                adapters::parse_coco(&text, &dataset).map_err(|e| anyhow::anyhow!("{}: {e}", f.display()))?
            }
            InputFormat::Jsonl => load_corpus(f)?,
        };
        all.append(&mut batch);
    }
    let mut seen = HashSet::new();
    for inst in &all {
        if !seen.insert(inst.id.as_str()) {
            bail!("duplicate instance id {:?} across inputs", inst.id);
        }
    }
    let images = ctx.settings.images(&a.images);
    if let Some(root) = &images {
        attach_digests(&mut all, Some(root))?;
    }
    ctx.write_instances(&a.out, &all)?;
    let inputs: Vec<&Path> = files.iter().map(PathBuf::as_path).collect();
    ctx.provenance(&a.out, &inputs, json!({"format": format!("{:?}", a.format).to_lowercase(), "dataset": dataset}))?;
    eprintln!("ingest: {} instances from {} file(s)", all.len(), files.len());
    Ok(())
}

fn crop_file_name(id: &str) -> String {
    let safe: String = id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect();
    format!("{safe}-{}.png", &digest_bytes(id.as_bytes())[..8])
}

pub fn crop(ctx: &Ctx, a: &CropArgs) -> Result<()> {
    let corpus_path = ctx.settings.corpus(&a.corpus)?;
    let corpus = load_corpus(&corpus_path)?;
    let root = ctx.settings.images(&a.images);

    let mut groups: Vec<(&str, Vec<usize>)> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    for (k, inst) in corpus.iter().enumerate() {
        let g = *slot.entry(inst.image_ref.as_str()).or_insert_with(|| {
            groups.push((inst.image_ref.as_str(), Vec::new()));
            groups.len() - 1
        });
        groups[g].1.push(k);
    }
    let method = match a.method {
        CropMethod::Axis => "axis",
        CropMethod::Rotated => "rotated",
    };
    type Cropped = (usize, std::result::Result<(TextInstance, Vec<u8>), String>);
    let results: Vec<Vec<Cropped>> = groups
        .par_iter()
        .map(|(image_ref, members)| {
            let img = match load_image(&resolve_image(root.as_deref(), image_ref)) {
                Ok(img) => img,
                Err(e) => return members.iter().map(|&k| (k, Err(format!("{image_ref}: {e}")))).collect(),
            };
            members
                .iter()
                .map(|&k| {
                    let inst = &corpus[k];
                    let out = match a.method {
                        CropMethod::Axis => min_aabb([&inst.polygon])
                            .map_err(|e| e.to_string())
                            .and_then(|b| crop_axis_aligned(&img, &b).map_err(|e| e.to_string())),
                        CropMethod::Rotated => min_rotated_rect(&inst.polygon)
                            .map_err(|e| e.to_string())
                            .and_then(|r| crop_rotated(&img, &r).map_err(|e| e.to_string())),
                    };
                    let done = out.and_then(|c| {
                        let png = encode_png(&c).map_err(|e| e.to_string())?;
                        let mut t = inst.clone();
                        t.image_ref = crop_file_name(&inst.id);
                        t.polygon = Polygon::rect(0.0, 0.0, c.width() as f64, c.height() as f64);
                        t.digest = Some(digest_bytes(&png));
                        let mut prov = t.provenance.take().unwrap_or_default();
                        prov.operation = Some(format!("crop:{method}"));
                        t.provenance = Some(prov);
                        Ok((t, png))
                    });
                    (k, done)
                })
                .collect()
        })
        .collect();
    let mut flat: Vec<Cropped> = results.into_iter().flatten().collect();
    flat.sort_by_key(|(k, _)| *k);

    let mut kept = Vec::with_capacity(flat.len());
    let mut skipped = Vec::new();
    for (k, r) in flat {
        match r {
            Ok((inst, png)) => {
                ctx.write_bytes(&a.crop_dir.join(&inst.image_ref), &png)?;
                kept.push(inst);
            }
            Err(reason) => skipped.push(json!({"id": corpus[k].id, "reason": reason})),
        }
    }
    ctx.write_instances(&a.out, &kept)?;
    ctx.write_lines(&sidecar(&a.out, "skipped.jsonl"), &skipped)?;
    ctx.provenance(&a.out, &[&corpus_path], json!({"method": method}))?;
    eprintln!("crop: {} cropped, {} skipped", kept.len(), skipped.len());
    Ok(())
}

pub fn filter(ctx: &Ctx, a: &FilterArgs) -> Result<()> {
    let corpus_path = ctx.settings.corpus(&a.corpus)?;
    let charset = ctx.settings.charset(&a.charset)?;
    let (kept, dropped): (Vec<TextInstance>, Vec<Dropped>) =
        consolidate::apply_filters(load_corpus(&corpus_path)?, &charset);
    ctx.write_instances(&a.out, &kept)?;
    ctx.write_lines(&a.drops.clone().unwrap_or_else(|| sidecar(&a.out, "drops.jsonl")), &dropped)?;
    ctx.provenance(&a.out, &[&corpus_path], json!({"charset": charset.name}))?;
    eprintln!("filter: {} kept, {} dropped", kept.len(), dropped.len());
    Ok(())
}

pub fn dedup(ctx: &Ctx, a: &DedupArgs) -> Result<()> {
    let corpus_path = ctx.settings.corpus(&a.corpus)?;
    let mut corpus = load_corpus(&corpus_path)?;
    if corpus.iter().any(|i| i.digest.is_none()) {
        if let Some(root) = ctx.settings.images(&a.images) {
            attach_digests(&mut corpus, Some(&root))?;
        }
    }
    let (mut kept, mut removed): (Vec<TextInstance>, Vec<Removed>) = consolidate::dedup_exact(corpus)?;
    let mut inputs: Vec<&Path> = vec![&corpus_path];
    if let Some(ref_path) = &a.reference_ids {
        let text = std::fs::read_to_string(ref_path).with_context(|| format!("reading {}", ref_path.display()))?;
        let ids: HashSet<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
        let (k, mut r) = consolidate::dedup_by_source_id(kept, &ids);
        kept = k;
        removed.append(&mut r);
        inputs.push(ref_path);
    }
    ctx.write_instances(&a.out, &kept)?;
    ctx.write_lines(&a.removed.clone().unwrap_or_else(|| sidecar(&a.out, "removed.jsonl")), &removed)?;
    ctx.provenance(&a.out, &inputs, json!({}))?;
    eprintln!("dedup: {} kept, {} removed", kept.len(), removed.len());
    Ok(())
}

pub fn collisions(ctx: &Ctx, a: &CollisionArgs) -> Result<()> {
    let corpus_path = ctx.settings.corpus(&a.corpus)?;
    let mode = ctx.settings.mode(&a.mode, NormalizationMode::Waic)?;
    let corpus = load_corpus(&corpus_path)?;
    let bench = load_corpus(&a.benchmark)?;
    let items = consolidate::list_label_collisions(&corpus, &bench, mode);
    ctx.write_lines(&a.out, &items)?;
    ctx.provenance(&a.out, &[&corpus_path, &a.benchmark], json!({"mode": mode}))?;
    eprintln!("collisions: {} candidate(s) queued", items.len());
    Ok(())
}

pub fn vote(ctx: &Ctx, a: &VoteArgs) -> Result<()> {
    if a.detections.len() < 2 {
        return Err(UsageError(format!(
            "vote needs detection files from at least two detectors, got {}",
            a.detections.len()
        ))
        .into());
    }
    let cfg = ctx.settings.consensus(a.iou, a.any_subset)?;
    let mut sets = Vec::new();
    for f in &a.detections {
        sets.extend(read_detections(f, ReadMode::Strict)?.records);
    }
    let detectors: HashSet<&str> = sets.iter().map(|s| s.detector_id.as_str()).collect();
    if detectors.len() < 2 {
        return Err(UsageError(format!("the detection files name only {} distinct detector(s)", detectors.len())).into());
    }
    let regions = voting::harvest(&sets, &cfg)?;
    let mut pseudo = voting::to_pseudo_instances(&regions, &a.dataset);
    if let Some(root) = ctx.settings.images(&a.images) {
        attach_digests(&mut pseudo, Some(&root))?;
    }
    ctx.write_instances(&a.out, &pseudo)?;
    let inputs: Vec<&Path> = a.detections.iter().map(PathBuf::as_path).collect();
    ctx.provenance(
        &a.out,
        &inputs,
        json!({"iou_threshold": cfg.iou_threshold, "require_all_detectors": cfg.require_all_detectors}),
    )?;
    eprintln!("vote: {} region(s) accepted from {} detector(s)", pseudo.len(), detectors.len());
    Ok(())
}

fn load_manifests(paths: &[PathBuf]) -> Result<Vec<PredictionManifest>> {
    let mut out: Vec<PredictionManifest> = Vec::new();
    for p in paths {
        for m in read_predictions(p)? {
            if out.iter().any(|o| o.model_id == m.model_id) {
                bail!("model {:?} appears in more than one prediction file", m.model_id);
            }
            out.push(m);
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct VoteLine<'a> {
    sample_id: &'a str,
    votes: String,
    sum: usize,
    level: DifficultyLevel,
}

pub fn difficulty(ctx: &Ctx, a: &DifficultyArgs) -> Result<()> {
    let corpus_path = ctx.settings.corpus(&a.corpus)?;
    let mode = ctx.settings.mode(&a.mode, NormalizationMode::Waics)?;
    let mut corpus = load_corpus(&corpus_path)?;
    let manifests = load_manifests(&a.predictions)?;
    let votes = difficulty::annotate(&mut corpus, &manifests, mode)?;
    let lines: Vec<VoteLine> = votes
        .iter()
        .map(|v| VoteLine {
            sample_id: &v.sample_id,
            votes: v.bits().iter().map(|b| if *b == 1 { '1' } else { '0' }).collect(),
            sum: v.sum(),
            level: difficulty::assign_level(v),
        })
        .collect();
    ctx.write_instances(&a.out, &corpus)?;
    ctx.write_lines(&a.votes.clone().unwrap_or_else(|| sidecar(&a.out, "votes.jsonl")), &lines)?;
    let mut inputs: Vec<&Path> = vec![&corpus_path];
    inputs.extend(a.predictions.iter().map(PathBuf::as_path));
    let models: Vec<&str> = manifests.iter().map(|m| m.model_id.as_str()).collect();
    ctx.provenance(&a.out, &inputs, json!({"mode": mode, "models": models}))?;
    let dist = difficulty::level_distribution(&corpus)?;
    let summary: Vec<String> = dist.iter().map(|(l, f)| format!("{l} {:.1}%", 100.0 * f)).collect();
    eprintln!("difficulty: {} instances, {} models: {}", corpus.len(), manifests.len(), summary.join(", "));
    Ok(())
}

fn read_subset(path: &Path) -> Result<SubsetManifest> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(serde::Deserialize, Serialize)]
struct PairLine {
    mutated_id: String,
    original_id: String,
}

pub fn evaluate(ctx: &Ctx, a: &EvaluateArgs) -> Result<()> {
    let corpora: Vec<PathBuf> = if a.corpora.is_empty() { vec![ctx.settings.corpus(&None)?] } else { a.corpora.clone() };
    let mode = ctx.settings.mode(&a.mode, NormalizationMode::Waics)?;
    let mut truth: BTreeMap<String, String> = BTreeMap::new();
    for c in &corpora {
        for inst in load_corpus(c)? {
            if truth.insert(inst.id.clone(), inst.label).is_some() {
                bail!("instance {:?} appears in more than one corpus", inst.id);
            }
        }
    }
    let pick = |ids: &mut dyn Iterator<Item = &String>, what: &str| -> Result<BTreeMap<String, String>> {
        ids.map(|id| {
            truth
                .get(id)
                .map(|l| (id.clone(), l.clone()))
                .ok_or_else(|| anyhow::anyhow!("{what}: id {id:?} is not in the ground truth"))
        })
        .collect()
    };
    let mut subsets: Vec<(String, BTreeMap<String, String>)> = Vec::new();
    for p in &a.subsets {
        let s = read_subset(p)?;
        let gt = pick(&mut s.ids.iter(), &s.name)?;
        subsets.push((s.name, gt));
    }
    if subsets.is_empty() {
        subsets.push(("all".to_string(), truth.clone()));
    }
    let pairs: Option<(BTreeMap<String, String>, BTreeMap<String, String>)> = match &a.pairs {
        Some(p) => {
            let lines: Vec<PairLine> = std::fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(serde_json::from_str)
                .collect::<std::result::Result<_, _>>()
                .with_context(|| format!("parsing {}", p.display()))?;
            let full = pick(&mut lines.iter().map(|l| &l.original_id), "pairs")?;
            let cut = pick(&mut lines.iter().map(|l| &l.mutated_id), "pairs")?;
            Some((full, cut))
        }
        None => None,
    };

    let manifests = load_manifests(&a.predictions)?;
    let mut reports: Vec<MetricReport> = Vec::new();
    for m in &manifests {
        let per_subset = subsets
            .iter()
            .map(|(name, gt)| {
                Ok(SubsetAccuracy { subset: name.clone(), accuracy: metrics::word_accuracy(m, gt, mode)? })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut report = metrics::aggregate_report(per_subset, mode)?;
        report.model_id = Some(m.model_id.clone());
        if let Some((full, cut)) = &pairs {
            report.incomplete_margin = Some(metrics::incomplete_margin(
                metrics::word_accuracy(m, full, mode)?,
                metrics::word_accuracy(m, cut, mode)?,
            ));
        }
        reports.push(report);
    }
    ctx.write_json(&a.out, &reports)?;
    let mut inputs: Vec<&Path> = corpora.iter().map(PathBuf::as_path).collect();
    inputs.extend(a.predictions.iter().map(PathBuf::as_path));
    inputs.extend(a.subsets.iter().map(PathBuf::as_path));
    inputs.extend(a.pairs.iter().map(PathBuf::as_path));
    ctx.provenance(&a.out, &inputs, json!({"mode": mode}))?;
    if a.table {
        print!("{}", metrics::render_table(&reports));
    }
    eprintln!("evaluate: {} model(s) on {} subset(s) under {mode}", reports.len(), subsets.len());
    Ok(())
}

pub fn assemble(ctx: &Ctx, a: &AssembleArgs) -> Result<()> {
    let corpus_path = ctx.settings.corpus(&a.corpus)?;
    let mut spec = BenchmarkSpec::load(&a.spec).map_err(|e| UsageError(e.to_string()))?;
    if spec.seed.is_none() {
        spec.seed = ctx.settings.seed;
    }
    spec.check().map_err(|e| UsageError(e.to_string()))?;
    let corpus = load_corpus(&corpus_path)?;
    let reviews = ReviewInputs::load(&spec)?;
    let assembly = benchmark::assemble(&spec, &corpus, &reviews)?;

    for s in &assembly.subsets {
        ctx.write_json(&a.out_dir.join(format!("{}.subset.json", s.name)), s)?;
    }
    let train_ids: HashSet<&str> = assembly.train_ids.iter().map(String::as_str).collect();
    let train: Vec<TextInstance> = corpus.iter().filter(|i| train_ids.contains(i.id.as_str())).cloned().collect();
    let train_path = a.out_dir.join("train.jsonl");
    ctx.write_instances(&train_path, &train)?;
    let record = json!({
        "spec_sha256": digest_file(&a.spec)?,
        "corpus_sha256": digest_file(&corpus_path)?,
        "seed": spec.seed,
        "subsets": assembly.subsets.iter().map(|s| json!({"name": s.name, "count": s.ids.len(), "provenance": s.provenance})).collect::<Vec<_>>(),
        "train_count": train.len(),
    });
    ctx.write_json(&a.out_dir.join("provenance.json"), &record)?;
    for s in &assembly.subsets {
        eprintln!("assemble: {:<16} {:>8}", s.name, s.ids.len());
    }
    eprintln!("assemble: {:<16} {:>8}", "train", train.len());
    Ok(())
}

pub fn mutate(ctx: &Ctx, a: &MutateArgs) -> Result<()> {
    let corpus_path = ctx.settings.corpus(&a.corpus)?;
    let mut corpus = load_corpus(&corpus_path)?;
    let mut seed = ctx.settings.seed;
    let mut inputs: Vec<&Path> = vec![&corpus_path];
    if let Some(p) = &a.subset {
        let s = read_subset(p)?;
        seed = seed.or(s.provenance.seed);
        let ids: HashSet<&str> = s.ids.iter().map(String::as_str).collect();
        let known: HashSet<&str> = corpus.iter().map(|i| i.id.as_str()).collect();
        if let Some(missing) = ids.iter().find(|id| !known.contains(*id)) {
            bail!("subset {:?}: id {missing:?} is not in the corpus", s.name);
        }
        corpus.retain(|i| ids.contains(i.id.as_str()));
        inputs.push(p);
    }
    let seed = seed.ok_or_else(|| UsageError("mutate-incomplete needs --seed or a subset manifest with a seed".into()))?;
    let root = ctx.settings.images(&a.images);
    let outcome = benchmark::mutate_incomplete(&corpus, seed, !a.any_level, "", |inst: &TextInstance| {
        load_image(&resolve_image(root.as_deref(), &inst.image_ref))
    });
    for s in &outcome.samples {
        ctx.write_bytes(&a.out_dir.join(&s.instance.image_ref), &s.png)?;
    }
    let instances: Vec<TextInstance> = outcome.samples.iter().map(|s| s.instance.clone()).collect();
    let out = a.out_dir.join("instances.jsonl");
    ctx.write_instances(&out, &instances)?;
    ctx.write_lines(&a.out_dir.join("pairs.jsonl"), &outcome.pairs)?;
    ctx.write_lines(&a.out_dir.join("skipped.jsonl"), &outcome.skipped)?;
    ctx.provenance(&out, &inputs, json!({"seed": seed, "require_easy": !a.any_level}))?;
    let lefts = outcome.pairs.iter().filter(|p| p.side.name() == "left").count();
    eprintln!(
        "mutate-incomplete: {} mutated ({} left, {} right), {} skipped",
        instances.len(),
        lefts,
        instances.len() - lefts,
        outcome.skipped.len()
    );
    Ok(())
}

pub fn stats(ctx: &Ctx, a: &StatsArgs) -> Result<()> {
    let corpus_path = ctx.settings.corpus(&a.corpus)?;
    let corpus = load_corpus(&corpus_path)?;
    let summary = consolidate::summarize(&corpus);
    let levels = if corpus.iter().all(|i| i.difficulty.is_some()) && !corpus.is_empty() {
        Some(difficulty::level_distribution(&corpus)?)
    } else {
        None
    };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&json!({"summary": summary, "levels": levels}))?);
    } else {
        print!("{}", summary.report());
        if let Some(levels) = levels {
            println!("difficulty:");
            for (l, f) in levels {
                println!("  {:<12} {:>6.2}%", l.name(), 100.0 * f);
            }
        }
    }
    Ok(())
}

pub fn review_serve(ctx: &Ctx, a: &ReviewArgs) -> Result<()> {
    let mut cfg = sceneset_review::ServiceConfig::new(&a.queues);
    if let Some(log) = &a.log {
        cfg.decision_log = log.clone();
    }
    cfg.image_root = ctx.settings.images(&a.images);
    cfg.corpus = a.corpus.clone();
    cfg.ui_dir = a.ui.clone();
    let addr: std::net::SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| UsageError(format!("bad address {}:{}: {e}", a.host, a.port)))?;
    let service = sceneset_review::ReviewService::open(cfg)?;
    let queues = service.queues();
    if ctx.dry() {
        eprintln!("dry run: {} queue(s) loaded, not serving", queues.len());
        return Ok(());
    }
    for q in &queues {
        eprintln!("queue {:<20} {}/{} decided", q.queue_id, q.progress.decided, q.progress.total);
    }
    eprintln!("listening on http://{addr}");
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(sceneset_review::serve(service, addr))?;
    Ok(())
}

pub fn scope(a: &ScopeArgs) -> Result<()> {
    let s = metrics::saturation_scope(a.total, a.errors, a.mislabeled, a.unrecognizable)
        .map_err(|e| UsageError(e.to_string()))?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&s)?);
    } else {
        println!("errors          {:>6}  ({:.2}% of {})", s.errors, s.error_percent, s.total);
        for (name, f) in [("max scope", s.max_scope), ("min scope", s.min_scope)] {
            println!("{name:<15} {:>6}  ({:.2}%, exact {:.3}%)", f.count, f.headline_percent, f.percent);
        }
    }
    Ok(())
}
