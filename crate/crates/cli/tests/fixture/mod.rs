//! Synthetic scene-text fixture: word images with ICDAR ground truth, three
//! detector outputs, thirteen recognizer prediction files, a reviewed
//! candidate queue and a benchmark spec.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sceneset_core::geometry::{Point, Polygon};
use sceneset_core::imaging::{save_png, RasterImage};
use sceneset_core::manifest::{
    write_jsonl_unchecked, DecisionRecord, DetectionSet, PredictionRecord, ReviewItem, Verdict,
};

pub const DATASET: &str = "synth";
pub const MODELS: usize = 13;
const WIDTH: u32 = 200;
const HEIGHT: u32 = 64;
const CHAR_W: f64 = 10.0;
const CHAR_H: f64 = 16.0;

const VOCAB: &[&str] = &[
    "STOP", "Exit", "CAFE", "open", "Kiosk", "menu", "Bus-7", "PARK", "Hotel", "taxi", "SALE", "Pizza", "Bank",
    "police", "Metro", "A&W", "Gate", "north", "ZONE", "Fresh", "Books", "LIVE", "Museum", "bakery",
];
const FOREIGN: &[&str] = &["Café", "中文", "Ünal"];

pub struct Fixture {
    pub root: PathBuf,
    pub images: PathBuf,
    pub gt: PathBuf,
    pub detections: Vec<PathBuf>,
    pub predictions: Vec<PathBuf>,
    pub spec: PathBuf,
    /// Instance ids that survive filtering and deduplication.
    pub clean_ids: Vec<String>,
    /// Reviewed candidates and the ones accepted.
    pub candidates: Vec<String>,
    pub accepted: Vec<String>,
    pub duplicate_count: usize,
    pub ignored_count: usize,
    pub foreign_count: usize,
}

struct Word {
    label: String,
    quad: [Point; 4],
}

fn glyph_bits(c: char) -> u32 {
    // 3x5 pseudo-glyph from the code point; never blank
    let v = (c as u32).wrapping_mul(2_654_435_761) >> 7;
    (v & 0x7fff) | 0x4000
}

fn render(rng: &mut ChaCha8Rng, words: &[Word], tops: &[(f64, f64)]) -> RasterImage {
    let mut img = RasterImage::from_fn(WIDTH, HEIGHT, |x, y| (190 + ((x * 7 + y * 13) % 23)) as u8).unwrap();
    for (w, &(x0, y0)) in words.iter().zip(tops) {
        for (k, c) in w.label.chars().enumerate() {
            let bits = glyph_bits(c);
            let cx = x0 + k as f64 * CHAR_W;
            for gy in 0..5u32 {
                for gx in 0..3u32 {
                    if bits >> (gy * 3 + gx) & 1 == 0 {
                        continue;
                    }
                    for dy in 0..3u32 {
                        for dx in 0..3u32 {
                            let x = cx as u32 + 1 + gx * 3 + dx;
                            let y = y0 as u32 + 1 + gy * 3 + dy;
                            if x < WIDTH && y < HEIGHT {
                                img.set(x, y, 0, 20 + rng.gen_range(0..15));
                            }
                        }
                    }
                }
            }
        }
    }
    img
}

fn jitter(rng: &mut ChaCha8Rng, quad: &[Point; 4], amount: f64) -> Polygon {
    Polygon::new(
        quad.iter()
            .map(|p| Point::new(p.x + rng.gen_range(-amount..=amount), p.y + rng.gen_range(-amount..=amount)))
            .collect(),
    )
}

fn corrupt(rng: &mut ChaCha8Rng, label: &str) -> String {
    let mut chars: Vec<char> = label.chars().collect();
    let k = rng.gen_range(0..chars.len());
    chars[k] = if chars[k] == 'Q' { 'X' } else { 'Q' };
    chars.into_iter().collect()
}

fn fmt_coord(v: f64) -> String {
    format!("{v:.1}")
}

/// Writes the fixture for `n_images` scenes under `root`.
pub fn generate(root: &Path, n_images: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = root.join("images");
    let gt = root.join("gt");
    std::fs::create_dir_all(&images).unwrap();
    std::fs::create_dir_all(&gt).unwrap();

    let mut clean: Vec<(String, String)> = Vec::new();
    let mut det_sets: [Vec<DetectionSet>; 3] = Default::default();
    let detectors = ["dbnet", "east", "bdn"];
    let (mut duplicate_count, mut ignored_count, mut foreign_count) = (0, 0, 0);

    for i in 0..n_images {
        let name = format!("img_{i:03}");
        let n_words = if rng.gen_bool(0.5) { 2 } else { 1 };
        let mut words = Vec::new();
        let mut tops = Vec::new();
        for w in 0..n_words {
            let label = if rng.gen_bool(0.03) {
                foreign_count += 1;
                FOREIGN[rng.gen_range(0..FOREIGN.len())].to_string()
            } else {
                VOCAB[rng.gen_range(0..VOCAB.len())].to_string()
            };
            let len = label.chars().count() as f64;
            let x0 = rng.gen_range(4.0..(WIDTH as f64 - len * CHAR_W - 4.0)).floor();
            let y0 = if w == 0 { 6.0 } else { 38.0 };
            let (x1, y1) = (x0 + len * CHAR_W, y0 + CHAR_H + 2.0);
            let skew = if rng.gen_bool(0.3) { 2.0 } else { 0.0 };
            let quad = [Point::new(x0, y0 + skew), Point::new(x1, y0), Point::new(x1, y1 - skew), Point::new(x0, y1)];
            words.push(Word { label, quad });
            tops.push((x0, y0));
        }
        let img = render(&mut rng, &words, &tops);
        save_png(&img, &images.join(format!("{name}.png"))).unwrap();

        let mut lines = Vec::new();
        for w in &words {
            let coords: Vec<String> = w.quad.iter().flat_map(|p| [fmt_coord(p.x), fmt_coord(p.y)]).collect();
            lines.push(format!("{},{}", coords.join(","), w.label));
        }
        if rng.gen_bool(0.1) {
            // an exact repeat of the first line
            lines.push(lines[0].clone());
            duplicate_count += 1;
        }
        if rng.gen_bool(0.1) {
            lines.push("150,50,190,50,190,60,150,60,###".to_string());
            ignored_count += 1;
        }
        for (k, w) in words.iter().enumerate() {
            if w.label.is_ascii() {
                clean.push((format!("{DATASET}/{name}_{}", k + 1), w.label.clone()));
            }
        }
        std::fs::write(gt.join(format!("gt_{name}.txt")), lines.join("\n") + "\n").unwrap();

        let shared_fp = rng.gen_bool(0.15);
        for (d, sets) in det_sets.iter_mut().enumerate() {
            let mut regions: Vec<Polygon> = Vec::new();
            for w in &words {
                if d == 1 && rng.gen_bool(0.05) {
                    continue;
                }
                regions.push(jitter(&mut rng, &w.quad, 0.8));
            }
            if shared_fp && d < 2 {
                regions.push(Polygon::rect(160.0, 30.0, 190.0, 60.0));
            }
            regions.shuffle(&mut rng);
            sets.push(DetectionSet { detector_id: detectors[d].into(), image_ref: format!("{name}.png"), regions });
        }
    }

    let mut detections = Vec::new();
    for (d, sets) in det_sets.iter().enumerate() {
        let p = root.join(format!("detections_{}.jsonl", detectors[d]));
        write_jsonl_unchecked(sets, &p).unwrap();
        detections.push(p);
    }

    // recognizers: each sample gets a number of correct models, drawn
    // uniformly so every difficulty level is populated
    let pred_dir = root.join("predictions");
    let mut per_model: Vec<Vec<PredictionRecord>> = (0..MODELS).map(|_| Vec::new()).collect();
    for (id, label) in &clean {
        let k = rng.gen_range(0..=MODELS);
        let mut order: Vec<usize> = (0..MODELS).collect();
        order.shuffle(&mut rng);
        for (rank, &m) in order.iter().enumerate() {
            let text = if rank < k {
                if rng.gen_bool(0.2) { label.to_lowercase() } else { label.clone() }
            } else {
                corrupt(&mut rng, label)
            };
            let model_id = format!("model{m:02}");
            per_model[m].push(PredictionRecord { model_id: model_id.clone(), sample_id: id.clone(), text });
            // the mutated copy: the model reads the word without its first letter
            let cut: String = label.chars().skip(1).collect();
            let text = if rank < k && rng.gen_bool(0.7) { cut } else { corrupt(&mut rng, label) };
            per_model[m].push(PredictionRecord { model_id, sample_id: format!("{id}#incomplete"), text });
        }
    }
    let mut predictions = Vec::new();
    for (m, recs) in per_model.iter().enumerate() {
        let p = pred_dir.join(format!("model{m:02}.jsonl"));
        write_jsonl_unchecked(recs, &p).unwrap();
        predictions.push(p);
    }

    // a reviewed queue of 10 candidates, 6 accepted
    let mut pool: Vec<&String> = clean.iter().map(|(id, _)| id).collect();
    pool.shuffle(&mut rng);
    let candidates: Vec<String> = pool.iter().take(10).map(|s| s.to_string()).collect();
    let accepted: Vec<String> = candidates.iter().take(6).cloned().collect();
    let items: Vec<ReviewItem> = candidates
        .iter()
        .map(|id| ReviewItem {
            item_id: id.clone(),
            image_ref: format!("{}.png", id.trim_start_matches("synth/").rsplit_once('_').unwrap().0),
            label: clean.iter().find(|(c, _)| c == id).unwrap().1.clone(),
            reason: "curved text candidate".into(),
            thumbnail_ref: None,
        })
        .collect();
    let queue_dir = root.join("queues");
    write_jsonl_unchecked(&items, &queue_dir.join("curve.jsonl")).unwrap();
    let decisions: Vec<DecisionRecord> = candidates
        .iter()
        .enumerate()
        .map(|(k, id)| DecisionRecord {
            queue_id: Some("curve".into()),
            item_id: id.clone(),
            verdict: if k < 6 { Verdict::Accept } else { Verdict::Reject },
            reviewer: "fixture".into(),
            timestamp: 1_700_000_000 + k as i64,
        })
        .collect();
    write_jsonl_unchecked(&decisions, &root.join("decisions.jsonl")).unwrap();

    let spec = root.join("benchmark.toml");
    std::fs::write(
        &spec,
        r#"seed = 2023

[[subset]]
name = "curve"
source = "reviewed"
candidates = "queues/curve.jsonl"
decisions = "decisions.jsonl"

[[subset]]
name = "incomplete"
source = "mutation"
target_size = 20

[[subset]]
name = "general"
source = "stratified"
target_size = 50
seed = 7
"#,
    )
    .unwrap();

    let clean_ids: BTreeSet<String> = clean.into_iter().map(|(id, _)| id).collect();
    Fixture {
        root: root.to_path_buf(),
        images,
        gt,
        detections,
        predictions,
        spec,
        clean_ids: clean_ids.into_iter().collect(),
        candidates,
        accepted,
        duplicate_count,
        ignored_count,
        foreign_count,
    }
}

pub fn sceneset(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sceneset")).args(args).output().expect("run sceneset")
}

/// Every stage of the pipeline, outputs under `out`. Returns an error naming
/// the first failing stage.
pub fn run_pipeline(fx: &Fixture, out: &Path, workers: usize) -> Result<(), String> {
    let p = |rel: &str| out.join(rel).to_string_lossy().into_owned();
    let s = |path: &Path| path.to_string_lossy().into_owned();
    let workers = workers.to_string();
    let images = s(&fx.images);
    let mut steps: Vec<(&str, Vec<String>)> = vec![
        (
            "ingest",
            vec!["ingest", "--format", "icdar", "--input", &s(&fx.gt), "--dataset", DATASET, "--images", &images]
                .into_iter()
                .map(String::from)
                .chain(["--image-ext".into(), "png".into(), "--out".into(), p("ingested.jsonl")])
                .collect(),
        ),
        (
            "crop",
            vec!["crop".into(), "--corpus".into(), p("ingested.jsonl"), "--images".into(), images.clone(),
                 "--crop-dir".into(), p("crops"), "--out".into(), p("cropped.jsonl")],
        ),
        ("filter", vec!["filter".into(), "--corpus".into(), p("cropped.jsonl"), "--out".into(), p("filtered.jsonl")]),
        ("dedup", vec!["dedup".into(), "--corpus".into(), p("filtered.jsonl"), "--out".into(), p("deduped.jsonl")]),
    ];
    let mut vote = vec!["vote".to_string()];
    for d in &fx.detections {
        vote.extend(["--detections".into(), s(d)]);
    }
    vote.extend(["--images".into(), images.clone(), "--out".into(), p("pseudo.jsonl")]);
    steps.push(("vote", vote));
    let mut diff = vec!["difficulty".to_string(), "--corpus".into(), p("deduped.jsonl")];
    for f in &fx.predictions {
        diff.extend(["--predictions".into(), s(f)]);
    }
    diff.extend(["--out".into(), p("leveled.jsonl")]);
    steps.push(("difficulty", diff));
    steps.push((
        "assemble",
        vec!["assemble".into(), "--spec".into(), s(&fx.spec), "--corpus".into(), p("leveled.jsonl"),
             "--out-dir".into(), p("benchmark")],
    ));
    steps.push((
        "mutate-incomplete",
        vec!["mutate-incomplete".into(), "--corpus".into(), p("leveled.jsonl"), "--subset".into(),
             p("benchmark/incomplete.subset.json"), "--images".into(), p("crops"), "--out-dir".into(), p("incomplete")],
    ));
    let mut eval = vec!["evaluate".to_string(), "--corpus".into(), p("leveled.jsonl"), "--corpus".into(),
                        p("incomplete/instances.jsonl")];
    for f in &fx.predictions {
        eval.extend(["--predictions".into(), s(f)]);
    }
    for sub in ["curve", "general"] {
        eval.extend(["--subset".into(), p(&format!("benchmark/{sub}.subset.json"))]);
    }
    eval.extend(["--pairs".into(), p("incomplete/pairs.jsonl"), "--out".into(), p("report.json")]);
    steps.push(("evaluate", eval));

    for (name, mut args) in steps {
        args.extend(["--workers".into(), workers.clone()]);
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = sceneset(&refs);
        if !o.status.success() {
            return Err(format!("{name} failed ({}): {}", o.status, String::from_utf8_lossy(&o.stderr).trim()));
        }
    }
    Ok(())
}

/// Relative path and bytes of every file under `dir`, sorted.
pub fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}
