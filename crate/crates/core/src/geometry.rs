//! Planar geometry shared by the conflict heuristics and contact detection:
//! oriented footprints, separating-axis overlap, convex clipping and
//! arc-length parameterised polylines.

use std::f64::consts::PI;

use nalgebra::Vector2;

pub type Vec2 = Vector2<f64>;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Unit vector pointing along `heading`.
pub fn heading_vector(heading: f64) -> Vec2 {
    Vec2::new(heading.cos(), heading.sin())
}

/// z-component of the planar cross product.
pub fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Rectangle footprint centred on the agent reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obb {
    pub center: Vec2,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

/// Result of a separating-axis test between two overlapping footprints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penetration {
    pub depth: f64,
    /// Minimum-penetration axis, oriented from the first box toward the second.
    pub normal: Vec2,
}

impl Obb {
    pub fn new(center: Vec2, heading: f64, length: f64, width: f64) -> Self {
        Self {
            center,
            heading,
            half_length: 0.5 * length,
            half_width: 0.5 * width,
        }
    }

    pub fn inflated(&self, margin: f64) -> Self {
        Self {
            half_length: self.half_length + margin,
            half_width: self.half_width + margin,
            ..*self
        }
    }

    /// Longitudinal and lateral unit axes.
    pub fn axes(&self) -> [Vec2; 2] {
        let u = heading_vector(self.heading);
        [u, Vec2::new(-u.y, u.x)]
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [Vec2; 4] {
        let [u, v] = self.axes();
        let a = u * self.half_length;
        let b = v * self.half_width;
        [
            self.center + a + b,
            self.center - a + b,
            self.center - a - b,
            self.center + a - b,
        ]
    }

    fn projected_radius(&self, axis: &Vec2) -> f64 {
        let [u, v] = self.axes();
        self.half_length * u.dot(axis).abs() + self.half_width * v.dot(axis).abs()
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        let [u, v] = self.axes();
        let d = p - self.center;
        d.dot(&u).abs() <= self.half_length && d.dot(&v).abs() <= self.half_width
    }

    /// Separating-axis test. Returns `None` when the boxes are disjoint or
    /// merely touching.
    pub fn penetration(&self, other: &Obb) -> Option<Penetration> {
        let d = other.center - self.center;
        let mut best: Option<Penetration> = None;
        for axis in self.axes().into_iter().chain(other.axes()) {
            let overlap =
                self.projected_radius(&axis) + other.projected_radius(&axis) - d.dot(&axis).abs();
            if overlap <= 0.0 {
                return None;
            }
            if best.is_none_or(|b| overlap < b.depth) {
                let normal = if d.dot(&axis) < 0.0 { -axis } else { axis };
                best = Some(Penetration {
                    depth: overlap,
                    normal,
                });
            }
        }
        best
    }

    pub fn edges(&self) -> [(Vec2, Vec2); 4] {
        let c = self.corners();
        [(c[0], c[1]), (c[1], c[2]), (c[2], c[3]), (c[3], c[0])]
    }
}

/// Sutherland-Hodgman clip of a convex polygon against a convex CCW clipper.
pub fn clip_convex(subject: &[Vec2], clipper: &[Vec2]) -> Vec<Vec2> {
    let mut output: Vec<Vec2> = subject.to_vec();
    for i in 0..clipper.len() {
        if output.is_empty() {
            break;
        }
        let a = clipper[i];
        let b = clipper[(i + 1) % clipper.len()];
        let edge = b - a;
        let inside = |p: &Vec2| cross(&edge, &(p - a)) >= 0.0;
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = inside(&cur);
            let prev_in = inside(&prev);
            if cur_in {
                if !prev_in {
                    output.push(line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

fn line_intersection(p0: Vec2, p1: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let r = p1 - p0;
    let s = b - a;
    let denom = cross(&r, &s);
    if denom.abs() < 1e-15 {
        return p0;
    }
    let t = cross(&(a - p0), &s) / denom;
    p0 + r * t
}

/// Area centroid of a simple polygon; falls back to the vertex mean for
/// degenerate (near-zero area) input.
pub fn polygon_centroid(poly: &[Vec2]) -> Option<Vec2> {
    if poly.is_empty() {
        return None;
    }
    let mut area2 = 0.0;
    let mut acc = Vec2::zeros();
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let c = cross(&p, &q);
        area2 += c;
        acc += (p + q) * c;
    }
    if area2.abs() < 1e-12 {
        let sum: Vec2 = poly.iter().sum();
        return Some(sum / poly.len() as f64);
    }
    Some(acc / (3.0 * area2))
}

pub fn point_segment_distance(p: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn segments_intersect(a: &Vec2, b: &Vec2, c: &Vec2, d: &Vec2) -> bool {
    let d1 = cross(&(b - a), &(c - a));
    let d2 = cross(&(b - a), &(d - a));
    let d3 = cross(&(d - c), &(a - c));
    let d4 = cross(&(d - c), &(b - c));
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

pub fn segment_segment_distance(a: &Vec2, b: &Vec2, c: &Vec2, d: &Vec2) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

/// Polyline parameterised by cumulative arc length. Zero-length segments
/// are dropped at construction.
#[derive(Debug, Clone)]
pub struct Polyline {
    points: Vec<Vec2>,
    arc: Vec<f64>,
    /// Direction used when the polyline has no extent.
    fallback_heading: f64,
}

impl Polyline {
    pub fn new(raw: impl IntoIterator<Item = Vec2>, fallback_heading: f64) -> Self {
        let mut points: Vec<Vec2> = Vec::new();
        let mut arc = Vec::new();
        for p in raw {
            match points.last() {
                None => {
                    points.push(p);
                    arc.push(0.0);
                }
                Some(last) => {
                    let step = (p - last).norm();
                    if step > 0.0 {
                        arc.push(arc[arc.len() - 1] + step);
                        points.push(p);
                    }
                }
            }
        }
        Self {
            points,
            arc,
            fallback_heading,
        }
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        self.arc.last().copied().unwrap_or(0.0)
    }

    fn segment_index(&self, s: f64) -> usize {
        // index of the segment [i, i+1] containing s
        let n = self.points.len();
        if n < 2 {
            return 0;
        }
        match self.arc.binary_search_by(|a| a.total_cmp(&s)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    fn segment_heading(&self, i: usize) -> f64 {
        if self.points.len() < 2 {
            return self.fallback_heading;
        }
        let d = self.points[i + 1] - self.points[i];
        d.y.atan2(d.x)
    }

    /// Point and tangent heading at arc length `s`. Beyond either end the
    /// polyline is extended along its terminal tangent.
    pub fn sample(&self, s: f64) -> (Vec2, f64) {
        if self.points.len() < 2 {
            let p0 = self.points.first().copied().unwrap_or_else(Vec2::zeros);
            return (p0 + heading_vector(self.fallback_heading) * s, self.fallback_heading);
        }
        let i = self.segment_index(s);
        let heading = self.segment_heading(i);
        let seg_len = self.arc[i + 1] - self.arc[i];
        let local = s - self.arc[i];
        let a = self.points[i];
        let b = self.points[i + 1];
        let p = if local >= 0.0 && local <= seg_len {
            a + (b - a) * (local / seg_len)
        } else {
            a + heading_vector(heading) * local
        };
        (p, heading)
    }

    /// Minimum distance from a point to the polyline.
    pub fn distance_to_point(&self, p: &Vec2) -> f64 {
        match self.points.len() {
            0 => f64::INFINITY,
            1 => (p - self.points[0]).norm(),
            _ => self
                .points
                .windows(2)
                .map(|w| point_segment_distance(p, &w[0], &w[1]))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Minimum distance between a footprint and the polyline; zero when the
    /// polyline touches or enters the footprint.
    pub fn distance_to_obb(&self, obb: &Obb) -> f64 {
        if self.points.iter().any(|p| obb.contains(p)) {
            return 0.0;
        }
        if self.points.len() == 1 {
            let p = self.points[0];
            return obb
                .edges()
                .iter()
                .map(|(a, b)| point_segment_distance(&p, a, b))
                .fold(f64::INFINITY, f64::min);
        }
        let mut best = f64::INFINITY;
        for w in self.points.windows(2) {
            for (a, b) in obb.edges() {
                best = best.min(segment_segment_distance(&w[0], &w[1], &a, &b));
                if best == 0.0 {
                    return 0.0;
                }
            }
        }
        best
    }

    pub fn distance_to_polyline(&self, other: &Polyline) -> f64 {
        if self.points.len() < 2 || other.points.len() < 2 {
            return self
                .points
                .iter()
                .map(|p| other.distance_to_point(p))
                .chain(other.points.iter().map(|p| self.distance_to_point(p)))
                .fold(f64::INFINITY, f64::min);
        }
        let mut best = f64::INFINITY;
        for w in self.points.windows(2) {
            for v in other.points.windows(2) {
                best = best.min(segment_segment_distance(&w[0], &w[1], &v[0], &v[1]));
            }
        }
        best
    }

    /// Arc length of the closest point on the polyline to `p`.
    pub fn project(&self, p: &Vec2) -> f64 {
        if self.points.len() < 2 {
            return 0.0;
        }
        let mut best = (f64::INFINITY, 0.0);
        for (i, w) in self.points.windows(2).enumerate() {
            let ab = w[1] - w[0];
            let t = ((p - w[0]).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            let d = (p - (w[0] + ab * t)).norm();
            if d < best.0 {
                best = (d, self.arc[i] + t * (self.arc[i + 1] - self.arc[i]));
            }
        }
        best.1
    }
}
