//! Built-in tool paths on the 60×60×20 blank.
//!
//! Paths are laid out in the blank's local frame and mapped to the machine
//! frame; moves between features retract vertically in the machine frame.

use crate::geometry::{Frame, Vec3};
use crate::toolpath::ToolPath;

pub const BLANK: Vec3 = Vec3::new(60.0, 60.0, 20.0);
pub const TOOL_RADIUS: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub dims: Vec3,
    pub frame: Frame,
    pub path: ToolPath,
    pub description: String,
}

/// Straight full-width slot, 50 mm long and 2 mm deep, starting in material.
pub fn slot() -> Scenario {
    let z = BLANK.z - 2.0;
    Scenario {
        name: "slot",
        dims: BLANK,
        frame: Frame::identity(),
        path: ToolPath::from_points([Vec3::new(5.0, 30.0, z), Vec3::new(55.0, 30.0, z)]),
        description: "full slot D10, depth 2, length 50".into(),
    }
}

/// Face the whole top to `depth` with serpentine passes `stepover` apart,
/// turning outside the blank.
pub fn face(depth: f64, stepover: f64) -> Scenario {
    let z = BLANK.z - depth;
    let (x0, x1) = (-TOOL_RADIUS - 2.0, BLANK.x + TOOL_RADIUS + 2.0);
    let mut pts = Vec::new();
    let passes = (BLANK.y / stepover - 1e-9).ceil() as usize;
    for k in 0..=passes {
        let y = (k as f64 * stepover).min(BLANK.y);
        let (a, b) = if k % 2 == 0 { (x0, x1) } else { (x1, x0) };
        pts.push(Vec3::new(a, y, z));
        pts.push(Vec3::new(b, y, z));
    }
    Scenario {
        name: "face",
        dims: BLANK,
        frame: Frame::identity(),
        path: ToolPath::from_points(pts),
        description: format!("face milling depth {depth}, stepover {stepover}"),
    }
}

/// Serpentine pocket over the full 60×60 at `depth`, tool centers kept
/// one radius inside the edges, plunging at the first corner.
pub fn pocket(depth: f64, stepover: f64) -> Scenario {
    let z = BLANK.z - depth;
    let (lo, hi) = (TOOL_RADIUS, BLANK.x - TOOL_RADIUS);
    let safe = BLANK.z + 5.0;
    let mut pts = vec![Vec3::new(lo, lo, safe)];
    let rows = ((hi - lo) / stepover - 1e-9).ceil() as usize;
    for k in 0..=rows {
        let y = (lo + k as f64 * stepover).min(hi);
        let (a, b) = if k % 2 == 0 { (lo, hi) } else { (hi, lo) };
        pts.push(Vec3::new(a, y, z));
        pts.push(Vec3::new(b, y, z));
    }
    let end = *pts.last().unwrap();
    pts.push(Vec3::new(end.x, end.y, safe));
    Scenario {
        name: "pocket",
        dims: BLANK,
        frame: Frame::identity(),
        path: ToolPath::from_points(pts),
        description: format!("serpentine pocket 60x60 depth {depth}, stepover {stepover}"),
    }
}

/// Paper-style stepped test geometry: a 10 mm full slot 0.5 deep, a 7.5 mm
/// shoulder 2 deep and a tapered cut 2 deep whose width grows from 0 to
/// 5 mm, giving abrupt and gradual changes of entry and exit angles.
pub fn steps(frame: Frame) -> Scenario {
    let top = BLANK.z;
    let (x0, x1) = (-8.0, BLANK.x + 8.0);
    let features = vec![
        vec![Vec3::new(x0, 12.0, top - 0.5), Vec3::new(x1, 12.0, top - 0.5)],
        vec![Vec3::new(x0, 57.5, top - 2.0), Vec3::new(x1, 57.5, top - 2.0)],
        // Tool edge touches y = 0 at x = 60 and sits 5 mm inside at x = 0.
        vec![Vec3::new(x1, -5.0 - 8.0 / 12.0, top - 2.0), Vec3::new(x0, 2.0 / 3.0, top - 2.0)],
    ];
    Scenario {
        name: "steps",
        dims: BLANK,
        frame,
        path: link(&features, &frame, BLANK),
        description: "paper-style stepped geometry: slot 10x0.5, shoulder 7.5x2, taper 0..5x2".into(),
    }
}

/// Map local feature polylines to the machine frame, joining them with
/// retract, traverse and descent moves at a safe machine height.
pub fn link(features: &[Vec<Vec3>], frame: &Frame, dims: Vec3) -> ToolPath {
    let top = (0..8)
        .map(|k| {
            frame
                .apply(Vec3::new(
                    if k & 1 == 0 { 0.0 } else { dims.x },
                    if k & 2 == 0 { 0.0 } else { dims.y },
                    if k & 4 == 0 { 0.0 } else { dims.z },
                ))
                .z
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let safe = top + 5.0;
    let mut pts = Vec::new();
    for f in features {
        let m: Vec<Vec3> = f.iter().map(|&p| frame.apply(p)).collect();
        let (first, last) = (m[0], *m.last().unwrap());
        pts.push(Vec3::new(first.x, first.y, safe));
        pts.extend(m);
        pts.push(Vec3::new(last.x, last.y, safe));
    }
    ToolPath::from_points(pts)
}
