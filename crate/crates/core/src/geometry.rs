//! Planar and spatial primitives shared by the simulation: vectors, rigid
//! frames, tooth-path circles, arc polygonization and polygon moments.
//!
//! All lengths are millimeters. Planar angles passed to [`Circle2::point_at`]
//! and [`arc_polyline`] are ordinary math angles (counterclockwise from +x);
//! the feed-relative engagement convention lives in [`crate::engagement`].

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this |area| a polygon has no usable centroid.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Discriminant band treated as a grazing (tangent) line.
pub const TANGENCY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn xy(self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z component of the planar cross product.
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    pub fn at_z(self, z: f64) -> Vec3 {
        Vec3::new(self.x, self.y, z)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// Rigid placement: `machine = origin + rotation · local`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub origin: Vec3,
    /// Row-major orthonormal matrix with det = +1.
    pub rotation: [[f64; 3]; 3],
}

impl Default for Frame {
    fn default() -> Self {
        Frame::identity()
    }
}

impl Frame {
    pub fn identity() -> Self {
        Frame {
            origin: Vec3::ZERO,
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn with_origin(mut self, origin: Vec3) -> Self {
        self.origin = origin;
        self
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let r = &self.rotation;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }

    /// Rᵀ·v
    pub fn unrotate(&self, v: Vec3) -> Vec3 {
        let r = &self.rotation;
        Vec3::new(
            r[0][0] * v.x + r[1][0] * v.y + r[2][0] * v.z,
            r[0][1] * v.x + r[1][1] * v.y + r[2][1] * v.z,
            r[0][2] * v.x + r[1][2] * v.y + r[2][2] * v.z,
        )
    }

    /// Local point to machine frame.
    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.origin + self.rotate(p)
    }

    /// Machine point to local frame.
    pub fn inverse_apply(&self, p: Vec3) -> Vec3 {
        self.unrotate(p - self.origin)
    }

    pub fn is_orthonormal(&self, tol: f64) -> bool {
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > tol {
                    return false;
                }
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        (det - 1.0).abs() <= tol
    }
}

/// Rotation by `angle_deg` about the unit `axis` (Rodrigues), origin at zero.
///
/// Panics if `axis` is not unit length within 1e-9.
pub fn tilt_transform(angle_deg: f64, axis: Vec3) -> Frame {
    assert!(
        (axis.norm() - 1.0).abs() <= 1e-9,
        "tilt axis must be a unit vector, |axis| = {}",
        axis.norm()
    );
    let (s, c) = angle_deg.to_radians().sin_cos();
    let t = 1.0 - c;
    let Vec3 { x, y, z } = axis;
    Frame {
        origin: Vec3::ZERO,
        rotation: [
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle2 {
    pub center: Point2,
    pub radius: f64,
}

impl Circle2 {
    pub fn new(center: Point2, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidInput(format!(
                "circle radius must be positive, got {radius}"
            )));
        }
        Ok(Circle2 { center, radius })
    }

    pub fn point_at(&self, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        Point2::new(self.center.x + self.radius * c, self.center.y + self.radius * s)
    }

    pub fn contains(&self, p: Point2) -> bool {
        (p - self.center).norm() <= self.radius
    }
}

/// Intersections of the infinite line through `p0`, `p1` with `c`, sorted by
/// the line parameter `t` (`point = p0 + t·(p1 − p0)`).
pub fn circle_line_intersections(c: &Circle2, p0: Point2, p1: Point2) -> Vec<(Point2, f64)> {
    let d = p1 - p0;
    let len = d.norm();
    assert!(len > 0.0, "line needs two distinct points");
    let u = d * (1.0 / len);
    let f = p0 - c.center;
    // Work along the unit direction so the discriminant carries mm² units.
    let b = f.dot(u);
    let disc = b * b - (f.dot(f) - c.radius * c.radius);
    if disc < -TANGENCY_EPS {
        return Vec::new();
    }
    if disc <= TANGENCY_EPS {
        let s = -b;
        return vec![(p0 + u * s, s / len)];
    }
    let root = disc.sqrt();
    [-b - root, -b + root]
        .into_iter()
        .map(|s| (p0 + u * s, s / len))
        .collect()
}

/// Intersection points of two circles (none for coincident circles).
pub fn circle_circle_intersections(a: &Circle2, b: &Circle2) -> Vec<Point2> {
    let delta = b.center - a.center;
    let d = delta.norm();
    if d == 0.0 || d > a.radius + b.radius || d < (a.radius - b.radius).abs() {
        return Vec::new();
    }
    let along = (d * d + a.radius * a.radius - b.radius * b.radius) / (2.0 * d);
    let h2 = a.radius * a.radius - along * along;
    let u = delta * (1.0 / d);
    let base = a.center + u * along;
    if h2 <= 0.0 {
        return vec![base];
    }
    let h = h2.sqrt();
    let perp = Point2::new(-u.y, u.x);
    vec![base + perp * h, base - perp * h]
}

/// Area of circle `b` not covered by circle `a` (equal radii).
pub fn circle_circle_lune_area(a: &Circle2, b: &Circle2) -> f64 {
    debug_assert!((a.radius - b.radius).abs() <= 1e-9 * a.radius.max(b.radius));
    let r = b.radius;
    let d = a.center.distance(b.center);
    let full = PI * r * r;
    if d >= 2.0 * r {
        return full;
    }
    let lens = 2.0 * r * r * (d / (2.0 * r)).acos() - 0.5 * d * (4.0 * r * r - d * d).sqrt();
    (full - lens).max(0.0)
}

/// Points on `c` from `phi_start` to `phi_end` (math angles) inclusive with
/// uniform spacing no larger than `max_step`. Runs clockwise when
/// `phi_end < phi_start`.
pub fn arc_polyline(c: &Circle2, phi_start: f64, phi_end: f64, max_step: f64) -> Vec<Point2> {
    assert!(max_step > 0.0, "max_step must be positive");
    let span = phi_end - phi_start;
    let n = ((span.abs() / max_step) - 1e-9).ceil().max(1.0) as usize;
    let mut pts = Vec::with_capacity(n + 1);
    for k in 0..n {
        pts.push(c.point_at(phi_start + span * (k as f64 / n as f64)));
    }
    pts.push(c.point_at(phi_end));
    pts
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon2 {
    pub vertices: Vec<Point2>,
}

impl Polygon2 {
    pub fn new(vertices: Vec<Point2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        Ok(Polygon2 { vertices })
    }

    pub fn signed_area(&self) -> f64 {
        signed_area_centroid(&self.vertices).0
    }

    /// Counterclockwise copy.
    pub fn normalized(&self) -> Polygon2 {
        let mut v = self.vertices.clone();
        if self.signed_area() < 0.0 {
            v.reverse();
        }
        Polygon2 { vertices: v }
    }
}

/// Shoelace area (positive for counterclockwise) and first-moment centroid.
/// Sums are taken relative to the first vertex to limit cancellation.
pub fn signed_area_centroid(v: &[Point2]) -> (f64, Point2) {
    if v.len() < 3 {
        return (0.0, v.first().copied().unwrap_or_default());
    }
    let o = v[0];
    let mut a2 = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for k in 0..v.len() {
        let p = v[k] - o;
        let q = v[(k + 1) % v.len()] - o;
        let w = p.cross(q);
        a2 += w;
        cx += (p.x + q.x) * w;
        cy += (p.y + q.y) * w;
    }
    let area = 0.5 * a2;
    if a2 == 0.0 {
        return (0.0, o);
    }
    let centroid = Point2::new(o.x + cx / (3.0 * a2), o.y + cy / (3.0 * a2));
    (area, centroid)
}

/// Unsigned area and centroid of a simple polygon.
pub fn polygon_area_centroid(p: &Polygon2) -> Result<(f64, Point2)> {
    let (area, centroid) = signed_area_centroid(&p.vertices);
    if area.abs() < DEGENERATE_AREA {
        return Err(Error::DegeneratePolygon { area });
    }
    Ok((area.abs(), centroid))
}

/// Distance from `p` to the segment `a`–`b`.
pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let d = b - a;
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    p.distance(a + d * t)
}

/// Proper crossing of segments `a0a1` and `b0b1` (shared endpoints and
/// collinear touching do not count).
pub fn segments_cross(a0: Point2, a1: Point2, b0: Point2, b1: Point2) -> bool {
    let d1 = (a1 - a0).cross(b0 - a0);
    let d2 = (a1 - a0).cross(b1 - a0);
    let d3 = (b1 - b0).cross(a0 - b0);
    let d4 = (b1 - b0).cross(a1 - b0);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Wrap an angle into [0, 2π).
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}
