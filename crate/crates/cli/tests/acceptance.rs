//! Acceptance suite: one PASS/FAIL line per criterion. Tolerances are fixed
//! here; a failing line carries the observed values.

mod fixture;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sceneset_core::benchmark::{choose_side, mutate_incomplete, stratified_sample, StratifyMode, SubsetManifest};
use sceneset_core::difficulty::{level_for_sum, DifficultyLevel};
use sceneset_core::geometry::{convex_hull, min_rotated_rect, polygon_iou, Point, Polygon};
use sceneset_core::imaging::{RasterImage, Side};
use sceneset_core::manifest::{read_corpus, DetectionSet, PredictionManifest, ReadMode, TextInstance};
use sceneset_core::metrics::{aggregate_report, saturation_scope, word_accuracy, MetricReport, NormalizationMode, SubsetAccuracy};
use sceneset_core::voting::{consensus_filter, match_detections, ConsensusConfig};
use sceneset_testkit as oracle;

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn saturation() -> Outcome {
    let s = saturation_scope(7672, 298, 76, 105).map_err(|e| e.to_string())?;
    check(s.max_scope.count == 222, format!("max count {}", s.max_scope.count))?;
    check(s.min_scope.count == 117, format!("min count {}", s.min_scope.count))?;
    check((s.max_scope.headline_percent - 2.91).abs() <= 0.005, format!("max {:.4}%", s.max_scope.headline_percent))?;
    check((s.min_scope.headline_percent - 1.53).abs() <= 0.005, format!("min {:.4}%", s.min_scope.headline_percent))?;
    // exact ratios against the total, computed independently
    check((s.max_scope.percent - 100.0 * 222.0 / 7672.0).abs() < 1e-12, "exact max ratio")?;
    check((s.min_scope.percent - 100.0 * 117.0 / 7672.0).abs() < 1e-12, "exact min ratio")?;
    Ok(format!(
        "max {} ({:.2}%), min {} ({:.2}%); exact share of total {:.3}% / {:.3}%",
        s.max_scope.count, s.max_scope.headline_percent, s.min_scope.count, s.min_scope.headline_percent,
        s.max_scope.percent, s.min_scope.percent
    ))
}

/// The published five-way split of 0..=13 correct votes.
fn published_level(sum: usize) -> DifficultyLevel {
    match sum {
        0 => DifficultyLevel::Challenging,
        1..=4 => DifficultyLevel::Hard,
        5..=7 => DifficultyLevel::Medium,
        8..=10 => DifficultyLevel::Normal,
        _ => DifficultyLevel::Easy,
    }
}

/// Generalized thresholds for an ensemble of `n`: upper bounds at
/// ceil(n * {0, 4, 7, 10} / 13), computed in floating point.
fn scaled_level(sum: usize, n: usize) -> DifficultyLevel {
    let bound = |b: f64| (n as f64 * b / 13.0).ceil() as usize;
    if sum <= bound(0.0) {
        DifficultyLevel::Challenging
    } else if sum <= bound(4.0) {
        DifficultyLevel::Hard
    } else if sum <= bound(7.0) {
        DifficultyLevel::Medium
    } else if sum <= bound(10.0) {
        DifficultyLevel::Normal
    } else {
        DifficultyLevel::Easy
    }
}

fn difficulty_bins() -> Outcome {
    for sum in 0..=13 {
        let got = level_for_sum(sum, 13);
        check(got == published_level(sum), format!("sum {sum}: got {got}"))?;
        check(scaled_level(sum, 13) == published_level(sum), format!("scaled rule disagrees at {sum}"))?;
    }
    for n in [5, 7, 26, 39] {
        for sum in 0..=n {
            check(level_for_sum(sum, n) == scaled_level(sum, n), format!("n {n} sum {sum}"))?;
        }
    }
    Ok("sums 0..=13 match the published bins; scaled bins equal them at N=13 and match for N in {5,7,26,39}".into())
}

fn table_average() -> Outcome {
    let row = [("IIIT", 89.7), ("SVT", 88.3), ("IC13", 82.2), ("IC15", 69.3), ("SVTP", 67.8), ("CUTE", 71.2)];
    let subsets = row.iter().map(|(s, a)| SubsetAccuracy { subset: s.to_string(), accuracy: *a }).collect();
    let r = aggregate_report(subsets, NormalizationMode::Waics).map_err(|e| e.to_string())?;
    let plain: f64 = row.iter().map(|(_, a)| a).sum::<f64>() / 6.0;
    check((r.average - plain).abs() < 1e-12, "average is not the unweighted mean")?;
    check((r.display_average() - 78.1).abs() <= 0.05, format!("avg {}", r.display_average()))?;
    Ok(format!("avg {:.4} -> displayed {:.1}", r.average, r.display_average()))
}

fn metric_ordering() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let alphabet: Vec<char> = "abcXYZ019 -.!'".chars().collect();
    for trial in 0..1000 {
        let n = rng.gen_range(1..40);
        let mut gt = BTreeMap::new();
        let mut preds = BTreeMap::new();
        for k in 0..n {
            let len = rng.gen_range(1..8);
            let label: String = (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect();
            let pred: String = match rng.gen_range(0..5) {
                0 => label.clone(),
                1 => label.to_uppercase(),
                2 => label.replace(' ', ""),
                3 => format!("{label}!"),
                _ => (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect(),
            };
            gt.insert(format!("s{k}"), label);
            preds.insert(format!("s{k}"), pred);
        }
        let m = PredictionManifest { model_id: "m".into(), predictions: preds };
        let acc = |mode| word_accuracy(&m, &gt, mode).map_err(|e| e.to_string());
        let (wa, waic, waics) = (acc(NormalizationMode::Wa)?, acc(NormalizationMode::Waic)?, acc(NormalizationMode::Waics)?);
        check(wa <= waic && waic <= waics, format!("trial {trial}: {wa} {waic} {waics}"))?;
    }
    let t = start.elapsed();
    check(t < Duration::from_secs(5), format!("took {t:?}"))?;
    Ok(format!("1000 fixtures ordered, {:.2} s", t.as_secs_f64()))
}

fn tuples(p: &Polygon) -> Vec<(f64, f64)> {
    p.vertices().iter().map(|v| (v.x, v.y)).collect()
}

fn random_convex(rng: &mut ChaCha8Rng, n: usize, cx: f64, cy: f64, r: f64) -> Polygon {
    loop {
        let pts: Vec<Point> = (0..n)
            .map(|_| {
                let a = rng.gen_range(0.0..std::f64::consts::TAU);
                let rr = r * rng.gen_range(0.3..1.0);
                Point::new(cx + rr * a.cos(), cy + rr * a.sin())
            })
            .collect();
        if let Ok(h) = convex_hull(&pts) {
            if h.len() >= 3 && h.signed_area().abs() > 1.0 {
                return h;
            }
        }
    }
}

fn geometry_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut worst_iou: f64 = 0.0;
    let mut quads = 0;
    while quads < 500 {
        let (ax, ay, bx, by) = (rng.gen_range(40.0..60.0), rng.gen_range(40.0..60.0), rng.gen_range(40.0..60.0), rng.gen_range(40.0..60.0));
        let a = random_convex(&mut rng, 4, ax, ay, 30.0);
        let b = random_convex(&mut rng, 4, bx, by, 30.0);
        if a.len() != 4 || b.len() != 4 {
            continue;
        }
        quads += 1;
        let got = polygon_iou(&a, &b).map_err(|e| e.to_string())?;
        let want = oracle::raster_iou(&tuples(&a), &tuples(&b), 2000);
        worst_iou = worst_iou.max((got - want).abs());
    }
    check(worst_iou <= 1e-3, format!("IoU deviation {worst_iou:.2e}"))?;

    let mut worst_rect: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(3..12);
        let radius = rng.gen_range(5.0..50.0);
        let p = random_convex(&mut rng, n, 0.0, 0.0, radius);
        let r = min_rotated_rect(&p).map_err(|e| e.to_string())?;
        let want = oracle::sweep_min_rect_area(&tuples(&p), 0.1);
        worst_rect = worst_rect.max((r.area() - want).abs() / want.max(1.0));
    }
    check(worst_rect <= 1e-6, format!("rect deviation {worst_rect:.2e}"))?;
    let t = start.elapsed();
    check(t < Duration::from_secs(60), format!("took {t:?}"))?;
    Ok(format!(
        "500 quads max |IoU - raster| {worst_iou:.2e}; 200 polygons max rect-area deviation {worst_rect:.2e}; {:.1} s",
        t.as_secs_f64()
    ))
}

/// Hull vertices in ring order (angle around their centroid).
fn hull_ring(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut h = oracle::brute_force_hull(points);
    let n = h.len() as f64;
    let (cx, cy) = h.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    h.sort_by(|a, b| (a.1 - cy).atan2(a.0 - cx).total_cmp(&(b.1 - cy).atan2(b.0 - cx)));
    h
}

fn consensus_voting() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let thresholds = [0.5, 0.6, 0.7, 0.8, 0.9];
    let mut accepted = [0usize; 5];
    for trial in 0..1000 {
        let w = rng.gen_range(20.0..200.0);
        let h = rng.gen_range(8.0..60.0);
        let jitter = rng.gen_range(0.5..12.0);
        let sets: Vec<DetectionSet> = ["a", "b", "c"]
            .iter()
            .map(|d| {
                let quad = Polygon::new(
                    [(50.0, 50.0), (50.0 + w, 50.0), (50.0 + w, 50.0 + h), (50.0, 50.0 + h)]
                        .iter()
                        .map(|(x, y)| Point::new(x + rng.gen_range(-jitter..=jitter), y + rng.gen_range(-jitter..=jitter)))
                        .collect(),
                );
                DetectionSet { detector_id: d.to_string(), image_ref: "t.png".into(), regions: vec![quad] }
            })
            .collect();
        for (k, &t) in thresholds.iter().enumerate() {
            let cfg = ConsensusConfig::new(t, true).map_err(|e| e.to_string())?;
            for g in match_detections(&sets, &cfg).map_err(|e| e.to_string())? {
                let m = &g.members;
                let all_above = m.len() == 3
                    && (0..3).all(|i| {
                        ((i + 1)..3).all(|j| {
                            // scored on convex hulls, like the library
                            let hi = hull_ring(&tuples(&m[i].polygon));
                            let hj = hull_ring(&tuples(&m[j].polygon));
                            oracle::raster_iou(&hi, &hj, 400) > t - 2e-3
                                && polygon_iou(&m[i].polygon, &m[j].polygon).unwrap() > t
                        })
                    });
                match consensus_filter(&g, &cfg) {
                    Ok(region) => {
                        check(all_above, format!("trial {trial}: accepted below {t}"))?;
                        for mem in m {
                            check(
                                mem.polygon.vertices().iter().all(|v| region.bbox.contains(*v)),
                                format!("trial {trial}: box misses a member"),
                            )?;
                        }
                        accepted[k] += 1;
                    }
                    Err(_) => check(!all_above, format!("trial {trial}: rejected although all pairs exceed {t}"))?,
                }
            }
        }
    }
    check(accepted.windows(2).all(|w| w[0] >= w[1]), format!("not monotone: {accepted:?}"))?;
    Ok(format!("accepted per threshold {thresholds:?}: {accepted:?}"))
}

fn leveled(per_level: [usize; 5]) -> Vec<TextInstance> {
    let mut out = Vec::new();
    for (l, n) in per_level.iter().enumerate() {
        for k in 0..*n {
            let mut t = TextInstance::new(format!("{l}-{k:04}"), "ds", "x.png", Polygon::rect(0.0, 0.0, 40.0, 10.0), "WORD");
            t.difficulty = Some(DifficultyLevel::ALL[l]);
            out.push(t);
        }
    }
    out
}

fn per_level(m: &SubsetManifest, corpus: &[TextInstance]) -> Vec<usize> {
    let ids: HashSet<&str> = m.ids.iter().map(String::as_str).collect();
    DifficultyLevel::ALL
        .iter()
        .map(|l| corpus.iter().filter(|i| i.difficulty == Some(*l) && ids.contains(i.id.as_str())).count())
        .collect()
}

fn stratified_and_mutation() -> Outcome {
    let even = leveled([100; 5]);
    let refs: Vec<&TextInstance> = even.iter().collect();
    let m = stratified_sample("g", &refs, 50, 1, StratifyMode::Even).map_err(|e| e.to_string())?;
    check(per_level(&m, &even) == vec![10; 5], format!("even draw {:?}", per_level(&m, &even)))?;

    let short = leveled([3, 100, 100, 100, 100]);
    let refs_short: Vec<&TextInstance> = short.iter().collect();
    let m2 = stratified_sample("g", &refs_short, 50, 1, StratifyMode::Even).map_err(|e| e.to_string())?;
    let counts = per_level(&m2, &short);
    check(counts[0] == 3 && counts.iter().sum::<usize>() == 50, format!("shortfall draw {counts:?}"))?;

    for seed in [1, 2, 99] {
        let a = stratified_sample("g", &refs, 50, seed, StratifyMode::Even).unwrap();
        for threads in [1, 4] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let b = pool.install(|| stratified_sample("g", &refs, 50, seed, StratifyMode::Even).unwrap());
            check(a == b, format!("seed {seed} differs with {threads} threads"))?;
        }
    }

    let mut words = leveled([0, 0, 0, 0, 10]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for w in &mut words {
        w.label = (0..rng.gen_range(2..10)).map(|_| rng.gen_range(b'A'..=b'Z') as char).collect();
    }
    let load = |t: &TextInstance| RasterImage::from_fn(10 * t.label.len() as u32, 12, |x, y| (x + y) as u8);
    let out = mutate_incomplete(&words, 5, true, "", load);
    check(out.samples.len() == 10, format!("{} mutated", out.samples.len()))?;
    for (s, w) in out.samples.iter().zip(&words) {
        check(s.instance.label.chars().count() + 1 == w.label.chars().count(), format!("{} -> {}", w.label, s.instance.label))?;
    }
    let again = mutate_incomplete(&words, 5, true, "", load);
    check(again.pairs == out.pairs, "side choice not deterministic")?;

    let lefts = (0..10_000).filter(|i| choose_side(77, &format!("sample-{i}")) == Side::Left).count();
    let frac = lefts as f64 / 10_000.0;
    check((0.48..=0.52).contains(&frac), format!("left fraction {frac}"))?;
    Ok(format!("even 10x5, shortfall {counts:?}, mutation 10/10 shortened by 1, left fraction {frac:.4}"))
}

fn check_outputs(fx: &fixture::Fixture, out: &Path) -> Result<String, String> {
    let read = |name: &str| -> Result<Vec<TextInstance>, String> {
        read_corpus(&out.join(name), ReadMode::Strict).map(|o| o.records).map_err(|e| e.to_string())
    };
    let ingested = read("ingested.jsonl")?;
    let deduped = read("deduped.jsonl")?;
    let pseudo = read("pseudo.jsonl")?;
    let leveled = read("leveled.jsonl")?;
    let train = read("benchmark/train.jsonl")?;
    let mutated = read("incomplete/instances.jsonl")?;
    for name in ["cropped.jsonl", "filtered.jsonl"] {
        read(name)?;
    }
    let ids: Vec<String> = {
        let mut v: Vec<String> = deduped.iter().map(|i| i.id.clone()).collect();
        v.sort();
        v
    };
    check(ids == fx.clean_ids, format!("{} instances after dedup, expected {}", ids.len(), fx.clean_ids.len()))?;
    check(leveled.iter().all(|i| i.difficulty.is_some()), "unleveled instance")?;
    let levels: HashSet<DifficultyLevel> = leveled.iter().filter_map(|i| i.difficulty).collect();
    check(levels.len() == 5, format!("only {} levels populated", levels.len()))?;

    let subset = |name: &str| -> Result<SubsetManifest, String> {
        let text = std::fs::read_to_string(out.join(format!("benchmark/{name}.subset.json"))).map_err(|e| e.to_string())?;
        serde_json::from_str(&text).map_err(|e| e.to_string())
    };
    let curve = subset("curve")?;
    let general = subset("general")?;
    let incomplete = subset("incomplete")?;
    check(curve.ids.len() == 6 && curve.ids.iter().all(|i| fx.accepted.contains(i)), "curve subset != accepted ids")?;
    check(general.ids.len() == 50, format!("general has {}", general.ids.len()))?;
    check(incomplete.ids.len() == 20, format!("incomplete has {}", incomplete.ids.len()))?;
    let bench: HashSet<&str> = curve.ids.iter().chain(&general.ids).chain(&incomplete.ids).map(String::as_str).collect();
    check(bench.len() == 76, "subsets overlap")?;
    check(train.iter().all(|t| !bench.contains(t.id.as_str())), "train split shares ids with the benchmark")?;

    check(mutated.len() == 20, format!("{} mutated", mutated.len()))?;
    let by_id: BTreeMap<&str, &TextInstance> = leveled.iter().map(|i| (i.id.as_str(), i)).collect();
    for m in &mutated {
        let src = m.provenance.as_ref().and_then(|p| p.derived_from.as_deref()).ok_or("mutated without source")?;
        let orig = by_id.get(src).ok_or("mutated source unknown")?;
        check(m.label.chars().count() + 1 == orig.label.chars().count(), format!("{} -> {}", orig.label, m.label))?;
    }

    let words = ingested.iter().filter(|i| !i.ignored).count() - fx.duplicate_count;
    check(pseudo.len() <= words && pseudo.len() * 10 >= words * 8, format!("{} pseudo regions for {words} words", pseudo.len()))?;
    check(pseudo.iter().all(|p| p.is_pseudo() && p.digest.is_some()), "pseudo records lack provenance")?;

    let text = std::fs::read_to_string(out.join("report.json")).map_err(|e| e.to_string())?;
    let reports: Vec<MetricReport> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    check(reports.len() == fixture::MODELS, format!("{} reports", reports.len()))?;
    check(reports.iter().all(|r| r.per_subset.len() == 2 && r.incomplete_margin.is_some()), "report shape")?;
    Ok(format!(
        "{} ingested, {} clean, {} pseudo, subsets 6/20/50, train {}",
        ingested.len(),
        deduped.len(),
        pseudo.len(),
        train.len()
    ))
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = fixture::generate(&dir.path().join("fixture"), 200, 42);
    let start = Instant::now();
    fixture::run_pipeline(&fx, &dir.path().join("run"), 4)?;
    let t = start.elapsed();
    let detail = check_outputs(&fx, &dir.path().join("run"))?;
    check(t < Duration::from_secs(60), format!("pipeline took {t:?}"))?;
    Ok(format!("{detail}; {:.1} s", t.as_secs_f64()))
}

fn worker_independence() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = fixture::generate(&dir.path().join("fixture"), 200, 42);
    fixture::run_pipeline(&fx, &dir.path().join("w1"), 1)?;
    fixture::run_pipeline(&fx, &dir.path().join("w8"), 8)?;
    let a = fixture::tree(&dir.path().join("w1"));
    let b = fixture::tree(&dir.path().join("w8"));
    check(a.len() == b.len(), format!("{} vs {} files", a.len(), b.len()))?;
    for ((pa, ba), (pb, bb)) in a.iter().zip(&b) {
        check(pa == pb && ba == bb, format!("{pa} differs"))?;
    }
    Ok(format!("{} output files byte-identical with 1 and 8 workers", a.len()))
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("saturation arithmetic", saturation),
        ("difficulty binning", difficulty_bins),
        ("table average", table_average),
        ("metric ordering", metric_ordering),
        ("geometry oracles", geometry_oracles),
        ("consensus voting", consensus_voting),
        ("stratified sampling and mutation", stratified_and_mutation),
        ("end-to-end fixture pipeline", end_to_end),
        ("worker-count independence", worker_independence),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
