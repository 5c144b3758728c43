use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sceneset_core::geometry::{
    convex_hull, min_aabb, min_rotated_rect, polygon_area, polygon_iou, Point, Polygon,
};
use sceneset_testkit as oracle;

fn tuples(p: &Polygon) -> Vec<(f64, f64)> {
    p.vertices().iter().map(|v| (v.x, v.y)).collect()
}

/// Convex polygon with `n` vertices on a random ellipse.
fn random_convex(rng: &mut ChaCha8Rng, n: usize) -> Polygon {
    let cx = rng.gen_range(-50.0..50.0);
    let cy = rng.gen_range(-50.0..50.0);
    let rx = rng.gen_range(1.0..40.0);
    let ry = rng.gen_range(1.0..40.0);
    let tilt: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    let (ts, tc) = tilt.sin_cos();
    let pts = angles
        .into_iter()
        .map(|a| {
            let (x, y) = (rx * a.cos(), ry * a.sin());
            Point::new(cx + x * tc - y * ts, cy + x * ts + y * tc)
        })
        .collect();
    Polygon::new(pts)
}

#[test]
fn hull_matches_brute_force_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let n = rng.gen_range(3..30);
        let pts: Vec<Point> =
            (0..n).map(|_| Point::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0))).collect();
        let hull = convex_hull(&pts).expect("random points are not collinear");
        let mut got = tuples(&hull);
        got.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let raw: Vec<(f64, f64)> = pts.iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(got, oracle::brute_force_hull(&raw));
        assert!(hull.is_convex() && hull.signed_area() > 0.0);
    }
}

#[test]
fn hull_of_twenty_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let pts: Vec<Point> = (0..20).map(|_| Point::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0))).collect();
    let raw: Vec<(f64, f64)> = pts.iter().map(|p| (p.x, p.y)).collect();
    let mut got = tuples(&convex_hull(&pts).unwrap());
    got.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    assert_eq!(got, oracle::brute_force_hull(&raw));
}

#[test]
fn iou_matches_raster_oracle_on_convex_quads() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let a = random_convex(&mut rng, 4);
        // bias towards overlapping pairs
        let b = if rng.gen_bool(0.7) {
            let dx = rng.gen_range(-10.0..10.0);
            let dy = rng.gen_range(-10.0..10.0);
            let mut c = random_convex(&mut rng, 4);
            let ca = min_aabb([&a]).unwrap();
            let cc = min_aabb([&c]).unwrap();
            c = c.translate(
                (ca.x_min + ca.x_max - cc.x_min - cc.x_max) / 2.0 + dx,
                (ca.y_min + ca.y_max - cc.y_min - cc.y_max) / 2.0 + dy,
            );
            c
        } else {
            random_convex(&mut rng, 4)
        };
        let got = polygon_iou(&a, &b).unwrap();
        let want = oracle::raster_iou(&tuples(&a), &tuples(&b), 2000);
        worst = worst.max((got - want).abs());
        assert!((got - want).abs() <= 1e-3, "iou {got} vs raster {want}");
    }
    eprintln!("worst iou deviation from raster oracle: {worst:.2e}");
}

#[test]
fn shifted_unit_square_against_raster() {
    let a = Polygon::rect(0.0, 0.0, 1.0, 1.0);
    let b = a.translate(0.5, 0.0);
    let r = oracle::raster_iou(&tuples(&a), &tuples(&b), 2000);
    let got = polygon_iou(&a, &b).unwrap();
    assert!((got - 1.0 / 3.0).abs() < 1e-12);
    assert!((got - r).abs() < 1e-3);
}

#[test]
fn rotated_rect_matches_sweep_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for i in 0..200 {
        let n = if i == 0 { 8 } else { rng.gen_range(3..13) };
        let p = random_convex(&mut rng, n);
        let Ok(rect) = min_rotated_rect(&p) else {
            // skip the rare random sliver
            continue;
        };
        let pts = tuples(&p);
        let want = oracle::sweep_min_rect_area(&pts, 0.1);
        assert!((rect.area() - want).abs() <= 1e-6, "calipers {} vs sweep {}", rect.area(), want);
        assert!(rect.area() <= oracle::coarse_sweep_min_rect_area(&pts, 0.1) + 1e-9);
        // every vertex inside the reported rectangle
        let (u, v) = rect.axes();
        for q in p.vertices() {
            let du = (q.x - rect.center.x) * u.x + (q.y - rect.center.y) * u.y;
            let dv = (q.x - rect.center.x) * v.x + (q.y - rect.center.y) * v.y;
            assert!(du.abs() <= rect.width / 2.0 + 1e-6 && dv.abs() <= rect.height / 2.0 + 1e-6);
        }
        assert!(rect.width >= rect.height);
        assert!((-90.0..90.0).contains(&rect.angle));
    }
}

#[test]
fn aabb_of_overlapping_quads_is_vertex_fold() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let quads: Vec<Polygon> = (0..3).map(|_| random_convex(&mut rng, 4)).collect();
    let b = min_aabb(&quads).unwrap();
    let all: Vec<Point> = quads.iter().flat_map(|q| q.vertices().to_vec()).collect();
    let fold = all.iter().fold((f64::MAX, f64::MAX, f64::MIN, f64::MIN), |acc, p| {
        (acc.0.min(p.x), acc.1.min(p.y), acc.2.max(p.x), acc.3.max(p.y))
    });
    assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), fold);
}

fn arb_convex() -> impl Strategy<Value = Polygon> {
    (any::<u64>(), 3usize..10).prop_map(|(seed, n)| random_convex(&mut ChaCha8Rng::seed_from_u64(seed), n))
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in arb_convex(), b in arb_convex()) {
        prop_assume!(polygon_area(&a).is_ok_and(|x| x > 1e-3));
        prop_assume!(polygon_area(&b).is_ok_and(|x| x > 1e-3));
        let ab = polygon_iou(&a, &b).unwrap();
        let ba = polygon_iou(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((polygon_iou(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn enclosing_areas_are_ordered(p in arb_convex()) {
        prop_assume!(polygon_area(&p).is_ok_and(|x| x > 1e-3));
        let area = polygon_area(&p).unwrap();
        let aabb = min_aabb([&p]).unwrap().area();
        let rect = min_rotated_rect(&p).unwrap().area();
        prop_assert!(aabb >= area - 1e-9);
        prop_assert!(rect >= area - 1e-9);
        prop_assert!(rect <= aabb + 1e-9);
    }
}
