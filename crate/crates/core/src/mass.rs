//! Removed material per slice and the recursive mass / center-of-mass update.
//!
//! For one slice the removed region between tool positions n and n+1 is
//! bounded by the engaged arc of the tooth path C_{n+1}, the interpolation
//! line between the exit points, the engaged arc of C_n traversed backwards
//! and the interpolation line between the entry points. Taking the oriented
//! shoelace area of that closed boundary resolves the signs of the entry and
//! exit correction areas without a case table.

use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::engagement::{AngleFrame, EngagementInterval};
use crate::error::{Error, Result};
use crate::geometry::{
    arc_polyline, circle_circle_intersections, circle_line_intersections, point_segment_distance,
    segments_cross,
    signed_area_centroid, wrap_angle, Circle2, Point2, Vec3, DEGENERATE_AREA,
};

/// Why the geometric construction could not be used for a slice.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SliceAreaError {
    #[error("removed-region boundary self-intersects")]
    SelfIntersectingRegion,
    #[error("engagement at n+1 has no partner at n")]
    UnpairedEntry,
    #[error("engagement measures differ by {ratio:.3} between n and n+1")]
    MeasureMismatch { ratio: f64 },
    #[error("slice engaged around the full circumference")]
    FullEngagement,
    #[error("oriented area is negative ({area:e} mm²)")]
    NegativeArea { area: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct SliceAreaParams {
    /// Polygonization step for the tooth-path arcs (radians).
    pub dphi: f64,
    /// Boundary crossings closer than this to an arc end are treated as
    /// sampling noise rather than a broken region (mm).
    pub end_tolerance: f64,
    /// Largest accepted relative difference of engaged measure between n and n+1.
    pub mismatch_ratio: f64,
}

impl Default for SliceAreaParams {
    fn default() -> Self {
        SliceAreaParams {
            dphi: 0.4f64.to_radians(),
            end_tolerance: 0.5,
            mismatch_ratio: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceArea {
    pub area: f64,
    pub centroid: Option<Point2>,
}

impl SliceArea {
    pub const ZERO: SliceArea = SliceArea {
        area: 0.0,
        centroid: None,
    };
}

fn circular_overlap(a: &EngagementInterval, b: &EngagementInterval) -> f64 {
    let mut total = 0.0;
    for k in -1..=1 {
        let s = b.phi_in + 2.0 * PI * k as f64;
        let e = b.phi_ex + 2.0 * PI * k as f64;
        total += (a.phi_ex.min(e) - a.phi_in.max(s)).max(0.0);
    }
    total
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

#[derive(Debug, Clone, Copy)]
struct Arc {
    on_next: bool,
    theta_start: f64,
    theta_end: f64,
}

impl Arc {
    /// Whether the point at machine angle `theta` lies on this arc.
    fn covers(&self, theta: f64) -> bool {
        let span = self.theta_end - self.theta_start;
        let rel = wrap_angle((theta - self.theta_start) * span.signum());
        rel <= span.abs()
    }
}

/// Removed area of one slice and its planar centroid.
///
/// `eng_n` and `eng_n1` must both be expressed in `frame`, the angle frame of
/// the step n → n+1.
pub fn removed_area_slice(
    c_n: &Circle2,
    c_n1: &Circle2,
    eng_n: &[EngagementInterval],
    eng_n1: &[EngagementInterval],
    frame: &AngleFrame,
    params: &SliceAreaParams,
) -> std::result::Result<SliceArea, SliceAreaError> {
    if eng_n1.is_empty() {
        return Ok(SliceArea::ZERO);
    }
    if eng_n.iter().chain(eng_n1).any(EngagementInterval::is_full) {
        return Err(SliceAreaError::FullEngagement);
    }

    // Group intervals of both positions that overlap into components.
    let a = eng_n.len();
    let all: Vec<&EngagementInterval> = eng_n.iter().chain(eng_n1).collect();
    let mut parent: Vec<usize> = (0..all.len()).collect();
    for i in 0..a {
        for j in a..all.len() {
            if circular_overlap(all[i], all[j]) > 0.0 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri] = rj;
            }
        }
    }
    let mut roots: Vec<usize> = Vec::new();
    for i in a..all.len() {
        let r = find(&mut parent, i);
        if !roots.contains(&r) {
            roots.push(r);
        }
    }

    let mut area = 0.0;
    let mut mx = 0.0;
    let mut my = 0.0;
    for root in roots {
        let members: Vec<usize> = (0..all.len())
            .filter(|&i| find(&mut parent, i) == root)
            .collect();
        let prev: Vec<&EngagementInterval> =
            members.iter().filter(|&&i| i < a).map(|&i| all[i]).collect();
        let next: Vec<&EngagementInterval> =
            members.iter().filter(|&&i| i >= a).map(|&i| all[i]).collect();
        if prev.is_empty() {
            return Err(SliceAreaError::UnpairedEntry);
        }
        let m0: f64 = prev.iter().map(|iv| iv.measure()).sum();
        let m1: f64 = next.iter().map(|iv| iv.measure()).sum();
        let ratio = (m1 - m0).abs() / m0.max(m1);
        if ratio > params.mismatch_ratio {
            return Err(SliceAreaError::MeasureMismatch { ratio });
        }
        let (s, c) = component_region(c_n, c_n1, &prev, &next, frame, params)?;
        area += s;
        if let Some(c) = c {
            mx += c.x * s;
            my += c.y * s;
        }
    }
    if area < DEGENERATE_AREA {
        return Ok(SliceArea::ZERO);
    }
    let centroid = Point2::new(mx / area, my / area);
    // Every boundary piece lies in the hull of the two disks, so a simple
    // region has its centroid there too; one outside means the boundary
    // folded over itself in a way the crossing test missed.
    if point_segment_distance(centroid, c_n.center, c_n1.center) > c_n.radius + 1e-9 {
        return Err(SliceAreaError::SelfIntersectingRegion);
    }
    Ok(SliceArea {
        area,
        centroid: Some(centroid),
    })
}

fn component_region(
    c_n: &Circle2,
    c_n1: &Circle2,
    prev: &[&EngagementInterval],
    next: &[&EngagementInterval],
    frame: &AngleFrame,
    params: &SliceAreaParams,
) -> std::result::Result<(f64, Option<Point2>), SliceAreaError> {
    // A connected union of arcs leaves one gap; unwrap all angles from there.
    let covered = |phi: f64| prev.iter().chain(next).any(|iv| iv.contains(phi));
    let gap = prev
        .iter()
        .chain(next)
        .map(|iv| iv.phi_ex + 1e-9)
        .find(|&g| !covered(g))
        .ok_or(SliceAreaError::FullEngagement)?;
    let unwrap = |iv: &EngagementInterval| {
        let s = gap + wrap_angle(iv.phi_in - gap);
        (s, s + iv.measure())
    };
    let mut p: Vec<(f64, f64)> = prev.iter().map(|iv| unwrap(iv)).collect();
    let mut q: Vec<(f64, f64)> = next.iter().map(|iv| unwrap(iv)).collect();
    p.sort_by(|x, y| x.0.total_cmp(&y.0));
    q.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut arcs = Vec::with_capacity(p.len() + q.len());
    let mut verts: Vec<Point2> = Vec::new();
    for &(s, e) in &q {
        let arc = Arc {
            on_next: true,
            theta_start: frame.to_machine(s),
            theta_end: frame.to_machine(e),
        };
        verts.extend(arc_polyline(c_n1, arc.theta_start, arc.theta_end, params.dphi));
        arcs.push(arc);
    }
    for &(s, e) in p.iter().rev() {
        let arc = Arc {
            on_next: false,
            theta_start: frame.to_machine(e),
            theta_end: frame.to_machine(s),
        };
        verts.extend(arc_polyline(c_n, arc.theta_start, arc.theta_end, params.dphi));
        arcs.push(arc);
    }

    if boundary_crosses(c_n, c_n1, &arcs, params.end_tolerance) {
        return Err(SliceAreaError::SelfIntersectingRegion);
    }

    let (signed, centroid) = signed_area_centroid(&verts);
    let oriented = frame.sense() * signed;
    if oriented < -DEGENERATE_AREA.max(1e-9) {
        return Err(SliceAreaError::NegativeArea { area: oriented });
    }
    if oriented < DEGENERATE_AREA {
        return Ok((0.0, None));
    }
    Ok((oriented, Some(centroid)))
}

/// Crossings between boundary pieces away from the arc ends.
fn boundary_crosses(c_n: &Circle2, c_n1: &Circle2, arcs: &[Arc], tol: f64) -> bool {
    let circle = |a: &Arc| if a.on_next { c_n1 } else { c_n };
    let ends: Vec<Point2> = arcs
        .iter()
        .flat_map(|a| [circle(a).point_at(a.theta_start), circle(a).point_at(a.theta_end)])
        .collect();
    let near_end = |p: Point2| ends.iter().any(|e| e.distance(p) <= tol);
    let angle_on = |c: &Circle2, p: Point2| (p.y - c.center.y).atan2(p.x - c.center.x);

    // Arc of C_{n+1} against arc of C_n.
    for p in circle_circle_intersections(c_n, c_n1) {
        if near_end(p) {
            continue;
        }
        let on_next = arcs
            .iter()
            .any(|a| a.on_next && a.covers(angle_on(c_n1, p)));
        let on_prev = arcs
            .iter()
            .any(|a| !a.on_next && a.covers(angle_on(c_n, p)));
        if on_next && on_prev {
            return true;
        }
    }

    // Straight connectors run from the end of each arc to the start of the next.
    let segs: Vec<(Point2, Point2)> = (0..arcs.len())
        .map(|k| (ends[2 * k + 1], ends[(2 * k + 2) % ends.len()]))
        .filter(|(a, b)| a.distance(*b) > 1e-12)
        .collect();
    for &(s0, s1) in &segs {
        for arc in arcs {
            let c = circle(arc);
            for (p, t) in circle_line_intersections(c, s0, s1) {
                if t <= 0.0 || t >= 1.0 || near_end(p) {
                    continue;
                }
                if arc.covers(angle_on(c, p)) {
                    return true;
                }
            }
        }
    }
    for i in 0..segs.len() {
        for j in i + 1..segs.len() {
            let (a0, a1) = segs[i];
            let (b0, b1) = segs[j];
            if segments_cross(a0, a1, b0, b1) {
                return true;
            }
        }
    }
    false
}

/// How a slice's removed area was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AreaMethod {
    Geometric,
    Dexel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceRemoval {
    pub slice: usize,
    /// Machine z of the slice mid-height.
    pub z: f64,
    pub height: f64,
    pub area: f64,
    pub centroid: Option<Point2>,
    pub method: AreaMethod,
}

/// Removed volume of a step and its centroid (slice centroids placed at their
/// mid-heights). `None` when nothing was removed.
pub fn removed_volume_step(slices: &[SliceRemoval]) -> (f64, Option<Vec3>) {
    let mut v = 0.0;
    let mut m = Vec3::ZERO;
    for s in slices {
        let Some(c) = s.centroid else { continue };
        let dv = s.area * s.height;
        if dv <= 0.0 {
            continue;
        }
        v += dv;
        m += c.at_z(s.z) * dv;
    }
    if v > 0.0 {
        (v, Some(m * (1.0 / v)))
    } else {
        (0.0, None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassState {
    pub n: usize,
    pub mass: f64,
    pub volume: f64,
    pub com: Vec3,
}

impl MassState {
    pub fn initial(volume: f64, com: Vec3, density: f64) -> Self {
        MassState {
            n: 0,
            mass: density * volume,
            volume,
            com,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemovalRecord {
    /// Index of the position the tool arrives at.
    pub n: usize,
    pub volume: f64,
    pub mass: f64,
    pub centroid: Option<Vec3>,
    pub per_slice: Vec<SliceRemoval>,
}

impl RemovalRecord {
    pub fn from_slices(n: usize, density: f64, per_slice: Vec<SliceRemoval>) -> Self {
        let (volume, centroid) = removed_volume_step(&per_slice);
        RemovalRecord {
            n,
            volume,
            mass: density * volume,
            centroid,
            per_slice,
        }
    }

    pub fn count(&self, method: AreaMethod) -> usize {
        self.per_slice
            .iter()
            .filter(|s| s.method == method && s.area > 0.0)
            .count()
    }
}

/// m_{n+1} = m_n − m_r and V_{n+1} = V_n − V_r.
pub fn update_mass(state: &MassState, rec: &RemovalRecord) -> Result<MassState> {
    if rec.mass >= state.mass {
        return Err(Error::MassUnderflow {
            step: rec.n,
            removed: rec.mass,
            current: state.mass,
        });
    }
    Ok(MassState {
        n: state.n + 1,
        mass: state.mass - rec.mass,
        volume: state.volume - rec.volume,
        com: state.com,
    })
}

/// c_{n+1} = (c_n·V_n − c_r·V_r) / V_{n+1} for homogeneous material.
pub fn update_com(state: &MassState, rec: &RemovalRecord) -> Result<Vec3> {
    let Some(c_r) = rec.centroid else {
        return Ok(state.com);
    };
    if rec.volume <= 0.0 {
        return Ok(state.com);
    }
    if rec.volume >= state.volume {
        return Err(Error::VolumeUnderflow {
            step: rec.n,
            removed: rec.volume,
            current: state.volume,
        });
    }
    let rest = state.volume - rec.volume;
    Ok((state.com * state.volume - c_r * rec.volume) * (1.0 / rest))
}
