//! Polygon algebra used by cropping and detector voting.
//!
//! Coordinates are pixels in image space (x to the right, y downwards).
//! Degeneracy checks use [`EPSILON`] in squared-pixel units.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Collinearity / zero-area tolerance, in squared pixels.
pub const EPSILON: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon has a non-finite coordinate")]
    NonFinite,
    #[error("polygon is degenerate (area {0:e})")]
    Degenerate(f64),
    #[error("polygon is self-intersecting (edges {0} and {1})")]
    SelfIntersecting(usize, usize),
    #[error("all points are collinear")]
    Collinear,
    #[error("no polygons given")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point { x, y }
    }
}

/// z-component of (a - o) x (b - o); positive when o→a→b turns counter-clockwise
/// in a y-up frame.
pub fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// A closed ring of vertices. The closing edge is implicit (no repeated first vertex).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    /// Builds a polygon without validating it. Use [`Polygon::validate`] or
    /// [`Polygon::try_new`] when the input is untrusted.
    pub fn new(vertices: Vec<Point>) -> Self {
        Polygon { vertices }
    }

    /// Builds and validates in strict mode (simple, non-degenerate).
    pub fn try_new(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        let p = Polygon { vertices };
        p.validate(true)?;
        Ok(p)
    }

    pub fn from_coords(coords: &[(f64, f64)]) -> Self {
        Polygon::new(coords.iter().copied().map(Point::from).collect())
    }

    /// Axis-aligned rectangle as a counter-clockwise quad (y-up orientation).
    pub fn rect(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Polygon::from_coords(&[(x_min, y_min), (x_max, y_min), (x_max, y_max), (x_min, y_max)])
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace signed area; positive for counter-clockwise rings (y-up).
    pub fn signed_area(&self) -> f64 {
        0.5 * self.edges().map(|(a, b)| a.x * b.y - b.x * a.y).sum::<f64>()
    }

    /// Checks vertex count, finiteness, area and (when `strict`) simplicity.
    pub fn validate(&self, strict: bool) -> Result<(), GeometryError> {
        if self.vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices(self.vertices.len()));
        }
        if self.vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let area = self.signed_area().abs();
        if area <= EPSILON {
            return Err(GeometryError::Degenerate(area));
        }
        if strict {
            if let Some((i, j)) = self.first_self_intersection() {
                return Err(GeometryError::SelfIntersecting(i, j));
            }
        }
        Ok(())
    }

    /// Returns the first pair of non-adjacent edges that touch or cross.
    pub fn first_self_intersection(&self) -> Option<(usize, usize)> {
        let n = self.vertices.len();
        if n < 4 {
            return None;
        }
        let v = &self.vertices;
        for i in 0..n {
            let (a1, a2) = (v[i], v[(i + 1) % n]);
            for j in (i + 1)..n {
                // adjacent edges share a vertex by construction
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (b1, b2) = (v[j], v[(j + 1) % n]);
                if segments_intersect(a1, a2, b1, b2) {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Convexity test allowing collinear vertices.
    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        let mut sign = 0.0f64;
        for i in 0..n {
            let c = cross(self.vertices[i], self.vertices[(i + 1) % n], self.vertices[(i + 2) % n]);
            if c.abs() <= EPSILON {
                continue;
            }
            if sign == 0.0 {
                sign = c.signum();
            } else if c.signum() != sign {
                return false;
            }
        }
        sign != 0.0
    }

    /// Same ring with counter-clockwise orientation.
    pub fn to_ccw(&self) -> Polygon {
        let mut p = self.clone();
        if p.signed_area() < 0.0 {
            p.vertices.reverse();
        }
        p
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Polygon {
        Polygon::new(self.vertices.iter().map(|p| Point::new(p.x + dx, p.y + dy)).collect())
    }
}

/// Closed-segment intersection test (touching counts).
pub fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    let opposite = |a: f64, b: f64| (a > EPSILON && b < -EPSILON) || (a < -EPSILON && b > EPSILON);
    if opposite(d1, d2) && opposite(d3, d4) {
        return true;
    }
    let on_segment = |a: Point, b: Point, p: Point| {
        p.x >= a.x.min(b.x) - EPSILON
            && p.x <= a.x.max(b.x) + EPSILON
            && p.y >= a.y.min(b.y) - EPSILON
            && p.y <= a.y.max(b.y) + EPSILON
    };
    (d1.abs() <= EPSILON && on_segment(q1, q2, p1))
        || (d2.abs() <= EPSILON && on_segment(q1, q2, p2))
        || (d3.abs() <= EPSILON && on_segment(p1, p2, q1))
        || (d4.abs() <= EPSILON && on_segment(p1, p2, q2))
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Aabb {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        debug_assert!(x_min <= x_max && y_min <= y_max);
        Aabb { x_min, y_min, x_max, y_max }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn to_polygon(&self) -> Polygon {
        Polygon::rect(self.x_min, self.y_min, self.x_max, self.y_max)
    }
}

impl fmt::Display for Aabb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x_min, self.y_min, self.x_max, self.y_max)
    }
}

/// Oriented rectangle. `angle` is the direction of the width side in degrees,
/// measured from the +x axis towards +y, in `[-90, 90)`. Canonical form keeps
/// `width >= height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotatedRect {
    pub center: Point,
    pub width: f64,
    pub height: f64,
    pub angle: f64,
}

impl RotatedRect {
    /// Canonicalizes the orientation so that `width >= height` and the angle
    /// lies in `[-90, 90)`. Squares are further reduced into `[-45, 45)`.
    pub fn canonical(center: Point, width: f64, height: f64, angle: f64) -> Self {
        let (mut w, mut h, mut a) = (width, height, angle);
        if h > w {
            std::mem::swap(&mut w, &mut h);
            a += 90.0;
        }
        let square = (w - h).abs() <= EPSILON.sqrt() * w.max(1.0);
        let period = if square { 90.0 } else { 180.0 };
        let lo = if square { -45.0 } else { -90.0 };
        a = (a - lo).rem_euclid(period) + lo;
        // snap values like 89.99999999999999 that are really the upper bound
        if (a - (lo + period)).abs() < 1e-9 || (a - lo).abs() < 1e-9 {
            a = lo;
        }
        if a.abs() < 1e-9 {
            a = 0.0;
        }
        RotatedRect { center, width: w, height: h, angle: a }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// Unit vectors along the width and height sides.
    pub fn axes(&self) -> (Point, Point) {
        let (s, c) = self.angle.to_radians().sin_cos();
        (Point::new(c, s), Point::new(-s, c))
    }

    /// Corners in ring order.
    pub fn corners(&self) -> [Point; 4] {
        let (u, v) = self.axes();
        let (hw, hh) = (self.width / 2.0, self.height / 2.0);
        let at = |a: f64, b: f64| {
            Point::new(self.center.x + a * u.x + b * v.x, self.center.y + a * u.y + b * v.y)
        };
        [at(-hw, -hh), at(hw, -hh), at(hw, hh), at(-hw, hh)]
    }

    pub fn to_polygon(&self) -> Polygon {
        Polygon::new(self.corners().to_vec())
    }
}

/// Area of a valid polygon, independent of vertex orientation.
pub fn polygon_area(p: &Polygon) -> Result<f64, GeometryError> {
    p.validate(false)?;
    Ok(p.signed_area().abs())
}

/// Convex hull via Andrew's monotone chain. Output is counter-clockwise
/// (positive signed area), starts at the lowest-x/lowest-y point, and drops
/// collinear boundary points.
pub fn convex_hull(points: &[Point]) -> Result<Polygon, GeometryError> {
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Err(GeometryError::Collinear);
    }
    let mut hull: Vec<Point> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= EPSILON {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        return Err(GeometryError::Collinear);
    }
    let poly = Polygon::new(hull);
    if poly.signed_area() <= EPSILON {
        return Err(GeometryError::Collinear);
    }
    Ok(poly)
}

/// Tightest axis-aligned box around every vertex of every polygon.
pub fn min_aabb<'a, I>(polys: I) -> Result<Aabb, GeometryError>
where
    I: IntoIterator<Item = &'a Polygon>,
{
    let mut out: Option<Aabb> = None;
    for p in polys {
        for v in p.vertices() {
            if !v.x.is_finite() || !v.y.is_finite() {
                return Err(GeometryError::NonFinite);
            }
            out = Some(match out {
                None => Aabb { x_min: v.x, y_min: v.y, x_max: v.x, y_max: v.y },
                Some(b) => Aabb {
                    x_min: b.x_min.min(v.x),
                    y_min: b.y_min.min(v.y),
                    x_max: b.x_max.max(v.x),
                    y_max: b.y_max.max(v.y),
                },
            });
        }
    }
    out.ok_or(GeometryError::Empty)
}

/// Minimum-area enclosing rectangle by rotating calipers over the convex hull.
///
/// One side of an optimal rectangle is collinear with a hull edge, so each
/// edge is tried in turn while three caliper indices (furthest along the
/// edge, furthest from it, furthest against it) advance monotonically.
pub fn min_rotated_rect(p: &Polygon) -> Result<RotatedRect, GeometryError> {
    p.validate(false)?;
    let hull = convex_hull(p.vertices())?;
    let h = hull.vertices();
    let n = h.len();

    let mut best: Option<(f64, Point, Point, f64, f64, f64, f64)> = None;
    // Caliper indices (furthest along the edge, furthest from it, furthest
    // against it). They only ever increase and are reduced mod n on access.
    let (mut right, mut top, mut left) = (0usize, 0usize, 0usize);

    for i in 0..n {
        let a = h[i];
        let b = h[(i + 1) % n];
        let len = b.sub(a).dot(b.sub(a)).sqrt();
        if len <= EPSILON {
            continue;
        }
        let u = Point::new((b.x - a.x) / len, (b.y - a.y) / len);
        // inward normal for a counter-clockwise hull
        let v = Point::new(-u.y, u.x);
        let along = |k: usize| h[k % n].sub(a).dot(u);
        let normal = |k: usize| h[k % n].sub(a).dot(v);

        right = right.max(i + 1);
        while along(right + 1) > along(right) + EPSILON {
            right += 1;
        }
        top = top.max(right);
        while normal(top + 1) > normal(top) + EPSILON {
            top += 1;
        }
        left = left.max(top);
        while along(left + 1) < along(left) - EPSILON {
            left += 1;
        }

        let (min_u, max_u) = (along(left), along(right));
        let (min_v, max_v) = (0.0, normal(top));
        let area = (max_u - min_u) * (max_v - min_v);
        if best.as_ref().is_none_or(|b| area < b.0 - EPSILON) {
            best = Some((area, u, a, min_u, max_u, min_v, max_v));
        }
    }

    let (_, u, origin, min_u, max_u, min_v, max_v) = best.ok_or(GeometryError::Collinear)?;
    let v = Point::new(-u.y, u.x);
    let cu = (min_u + max_u) / 2.0;
    let cv = (min_v + max_v) / 2.0;
    let center = Point::new(origin.x + cu * u.x + cv * v.x, origin.y + cu * u.y + cv * v.y);
    let angle = u.y.atan2(u.x).to_degrees();
    Ok(RotatedRect::canonical(center, max_u - min_u, max_v - min_v, angle))
}

/// Clips `subject` by every edge of the convex counter-clockwise `clip`.
fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut output = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let (c1, c2) = (clip[i], clip[(i + 1) % n]);
        let input = std::mem::take(&mut output);
        let inside = |p: Point| cross(c1, c2, p) >= 0.0;
        let intersect = |p: Point, q: Point| {
            let dp = cross(c1, c2, p);
            let dq = cross(c1, c2, q);
            let t = dp / (dp - dq);
            Point::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
        };
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            match (inside(prev), inside(cur)) {
                (true, true) => output.push(cur),
                (true, false) => output.push(intersect(prev, cur)),
                (false, true) => {
                    output.push(intersect(prev, cur));
                    output.push(cur);
                }
                (false, false) => {}
            }
        }
    }
    output
}

fn as_convex_ccw(p: &Polygon) -> Result<Polygon, GeometryError> {
    p.validate(false)?;
    if p.is_convex() {
        Ok(p.to_ccw())
    } else {
        convex_hull(p.vertices())
    }
}

/// Area of the intersection of the convex hulls of `a` and `b`.
pub fn intersection_area(a: &Polygon, b: &Polygon) -> Result<f64, GeometryError> {
    let a = as_convex_ccw(a)?;
    let b = as_convex_ccw(b)?;
    let clipped = clip_convex(a.vertices(), b.vertices());
    if clipped.len() < 3 {
        return Ok(0.0);
    }
    Ok(Polygon::new(clipped).signed_area().abs())
}

/// Intersection over union of two polygons. Non-convex inputs are replaced by
/// their convex hulls before clipping.
pub fn polygon_iou(a: &Polygon, b: &Polygon) -> Result<f64, GeometryError> {
    let a = as_convex_ccw(a)?;
    let b = as_convex_ccw(b)?;
    let area_a = a.signed_area();
    let area_b = b.signed_area();
    // quick reject on boxes
    let ba = min_aabb([&a])?;
    let bb = min_aabb([&b])?;
    if ba.x_max <= bb.x_min || bb.x_max <= ba.x_min || ba.y_max <= bb.y_min || bb.y_max <= ba.y_min {
        return Ok(0.0);
    }
    if a == b {
        return Ok(1.0);
    }
    let clipped = clip_convex(a.vertices(), b.vertices());
    let inter = if clipped.len() < 3 { 0.0 } else { Polygon::new(clipped).signed_area().abs() };
    let inter = inter.min(area_a).min(area_b);
    let union = area_a + area_b - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

/// Height at least twice the width (on the bounding box) and a label of more
/// than one character.
pub fn is_vertical_instance(p: &Polygon, label: &str) -> bool {
    let Ok(b) = min_aabb([p]) else {
        return false;
    };
    b.height() >= 2.0 * b.width() && label.chars().count() > 1
}
