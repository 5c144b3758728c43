//! Brute-force reference computations for tests.
//!
//! Everything here works on plain `(f64, f64)` tuples and shares no code with
//! `sceneset-core`, so the two can be compared against each other.

pub type Pt = (f64, f64);

fn cross(o: Pt, a: Pt, b: Pt) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Hull vertices by exhaustive half-plane test: a pair (i, j) is a hull edge
/// when every other point lies strictly on one side. Returns the distinct
/// endpoints of such edges, sorted lexicographically.
pub fn brute_force_hull(points: &[Pt]) -> Vec<Pt> {
    let n = points.len();
    let mut out: Vec<Pt> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let all_left = (0..n)
                .filter(|&k| k != i && k != j)
                .all(|k| cross(points[i], points[j], points[k]) > 0.0);
            if all_left {
                out.push(points[i]);
                out.push(points[j]);
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    out.dedup();
    out
}

/// Span of x values where the horizontal line at `y` is inside the polygon
/// (even-odd rule; for convex rings this is a single interval).
fn row_spans(poly: &[Pt], y: f64) -> Vec<(f64, f64)> {
    let n = poly.len();
    let mut xs = Vec::new();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a.1 <= y && b.1 > y) || (b.1 <= y && a.1 > y) {
            xs.push(a.0 + (y - a.1) * (b.0 - a.0) / (b.1 - a.1));
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.chunks(2).filter(|c| c.len() == 2).map(|c| (c[0], c[1])).collect()
}

/// Cell centers `x0 + (k + 0.5) * step` (k in 0..cells) inside the span, as a
/// half-open index range.
fn cells_in(span: (f64, f64), x0: f64, step: f64, cells: usize) -> (usize, usize) {
    let lo = ((span.0 - x0) / step - 0.5).ceil().max(0.0) as usize;
    let hi = ((span.1 - x0) / step - 0.5).floor() as i64 + 1;
    let hi = hi.clamp(0, cells as i64) as usize;
    (lo.min(cells), hi.max(lo.min(cells)))
}

/// IoU estimated by sampling cell centers of a `grid x grid` raster laid over
/// the joint bounding box of both polygons.
pub fn raster_iou(a: &[Pt], b: &[Pt], grid: usize) -> f64 {
    let all = a.iter().chain(b.iter());
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in all {
        x0 = x0.min(p.0);
        y0 = y0.min(p.1);
        x1 = x1.max(p.0);
        y1 = y1.max(p.1);
    }
    let (sx, sy) = ((x1 - x0) / grid as f64, (y1 - y0) / grid as f64);
    let (mut inter, mut union) = (0u64, 0u64);
    for row in 0..grid {
        let y = y0 + (row as f64 + 0.5) * sy;
        let mut mask_a = vec![false; grid];
        let mut mask_b = vec![false; grid];
        for (poly, mask) in [(a, &mut mask_a), (b, &mut mask_b)] {
            for span in row_spans(poly, y) {
                let (lo, hi) = cells_in(span, x0, sx, grid);
                mask[lo..hi].iter_mut().for_each(|m| *m = true);
            }
        }
        for k in 0..grid {
            inter += (mask_a[k] && mask_b[k]) as u64;
            union += (mask_a[k] || mask_b[k]) as u64;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn box_area_at(points: &[Pt], theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let (mut u0, mut u1, mut v0, mut v1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in points {
        let u = p.0 * c + p.1 * s;
        let v = -p.0 * s + p.1 * c;
        u0 = u0.min(u);
        u1 = u1.max(u);
        v0 = v0.min(v);
        v1 = v1.max(v);
    }
    (u1 - u0) * (v1 - v0)
}

/// Minimum enclosing-rectangle area over a 0.1 degree sweep of [0, 90),
/// augmented with the direction of every point pair (the optimum is attained
/// at one of those, so the sweep alone would overestimate by O(step)).
pub fn sweep_min_rect_area(points: &[Pt], step_deg: f64) -> f64 {
    let mut best = f64::MAX;
    let steps = (90.0 / step_deg).round() as usize;
    for k in 0..steps {
        best = best.min(box_area_at(points, (k as f64 * step_deg).to_radians()));
    }
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let (dx, dy) = (points[j].0 - points[i].0, points[j].1 - points[i].1);
            if dx == 0.0 && dy == 0.0 {
                continue;
            }
            best = best.min(box_area_at(points, dy.atan2(dx)));
        }
    }
    best
}

/// Plain-sweep estimate only (no pair refinement).
pub fn coarse_sweep_min_rect_area(points: &[Pt], step_deg: f64) -> f64 {
    let steps = (90.0 / step_deg).round() as usize;
    (0..steps)
        .map(|k| box_area_at(points, (k as f64 * step_deg).to_radians()))
        .fold(f64::MAX, f64::min)
}

/// Bilinear sample with black outside the image; `img` is row-major gray.
pub fn bilinear_gray(img: &[u8], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let fx = x - 0.5;
    let fy = y - 0.5;
    let x0 = fx.floor();
    let y0 = fy.floor();
    let tx = fx - x0;
    let ty = fy - y0;
    let px = |xi: f64, yi: f64| -> f64 {
        if xi < 0.0 || yi < 0.0 || xi >= w as f64 || yi >= h as f64 {
            0.0
        } else {
            img[yi as usize * w + xi as usize] as f64
        }
    };
    let top = px(x0, y0) * (1.0 - tx) + px(x0 + 1.0, y0) * tx;
    let bottom = px(x0, y0 + 1.0) * (1.0 - tx) + px(x0 + 1.0, y0 + 1.0) * tx;
    top * (1.0 - ty) + bottom * ty
}

/// Rotates a gray image by `angle_deg` about `(cx, cy)` onto a canvas of the
/// same size: destination pixel `q` takes the source value at
/// `center + R(angle) (q - center)`.
pub fn rotate_gray(img: &[u8], w: usize, h: usize, cx: f64, cy: f64, angle_deg: f64) -> Vec<u8> {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            let sx = cx + dx * c - dy * s;
            let sy = cy + dx * s + dy * c;
            out[y * w + x] = bilinear_gray(img, w, h, sx, sy).round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

/// Quarter turn counter-clockwise by index permutation. Output is `h` wide
/// and `w` tall; destination (u, v) takes source (x = w - 1 - v, y = u).
pub fn quarter_turn_ccw(img: &[u8], w: usize, h: usize) -> Vec<u8> {
    let (ow, oh) = (h, w);
    let mut out = vec![0u8; ow * oh];
    for v in 0..oh {
        for u in 0..ow {
            out[v * ow + u] = img[u * w + (w - 1 - v)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raster_iou_of_shifted_squares() {
        let a = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let b = [(0.5, 0.0), (1.5, 0.0), (1.5, 1.0), (0.5, 1.0)];
        let iou = raster_iou(&a, &b, 2000);
        assert!((iou - 1.0 / 3.0).abs() < 1e-3, "{iou}");
    }

    #[test]
    fn sweep_of_diamond() {
        let d = [(1.0, 0.0), (2.0, 1.0), (1.0, 2.0), (0.0, 1.0)];
        assert!((sweep_min_rect_area(&d, 0.1) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hull_of_square_with_center() {
        let pts = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)];
        assert_eq!(brute_force_hull(&pts).len(), 4);
    }
}
