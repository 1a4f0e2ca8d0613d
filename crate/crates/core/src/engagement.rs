//! Cutter–workpiece engagement per disk slice.
//!
//! Angle convention: φ = 0 points along the instantaneous feed direction and
//! φ grows in the spindle rotation sense. In [`MillingMode::Down`] the sense is
//! clockwise seen from +z, so a right-hand spindle climb-cuts material lying
//! on the right of the feed at φ ∈ (0, π/2]. [`MillingMode::Up`] mirrors the
//! angles about the feed axis.
//!
//! An interval is stored as `φ_in ∈ [0, 2π)` with `φ_in < φ_ex ≤ φ_in + 2π`,
//! so an arc straddling the feed direction stays a single interval.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dexel::WorkpieceModel;
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Point2, Vec3};
use crate::tool::Tool;

/// Upper bound on the circumferential sampling step (0.5°).
pub const MAX_SAMPLE_STEP: f64 = 0.5 * PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MillingMode {
    #[default]
    Down,
    Up,
}

/// Maps feed-relative angles φ to machine math angles θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleFrame {
    /// Machine angle of the feed direction (counterclockwise from +x).
    pub heading: f64,
    pub mode: MillingMode,
}

impl AngleFrame {
    pub fn new(heading: f64, mode: MillingMode) -> Self {
        AngleFrame { heading, mode }
    }

    /// +1 when φ runs counterclockwise in the machine frame.
    pub fn sense(&self) -> f64 {
        match self.mode {
            MillingMode::Down => -1.0,
            MillingMode::Up => 1.0,
        }
    }

    pub fn to_machine(&self, phi: f64) -> f64 {
        self.heading + self.sense() * phi
    }

    pub fn from_machine(&self, theta: f64) -> f64 {
        wrap_angle(self.sense() * (theta - self.heading))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngagementInterval {
    pub phi_in: f64,
    pub phi_ex: f64,
}

impl EngagementInterval {
    pub fn measure(&self) -> f64 {
        self.phi_ex - self.phi_in
    }

    pub fn is_full(&self) -> bool {
        self.measure() >= 2.0 * PI - 1e-12
    }

    /// Whether `phi` (any branch) lies inside the interval.
    pub fn contains(&self, phi: f64) -> bool {
        let rel = wrap_angle(phi - self.phi_in);
        rel <= self.measure() + 1e-12
    }

    /// Re-express in another angle frame of the same milling mode.
    pub fn rebase(&self, from: &AngleFrame, to: &AngleFrame) -> Self {
        debug_assert_eq!(from.mode, to.mode);
        let m = self.measure();
        if self.is_full() {
            return EngagementInterval { phi_in: 0.0, phi_ex: 2.0 * PI };
        }
        let phi_in = to.from_machine(from.to_machine(self.phi_in));
        EngagementInterval {
            phi_in,
            phi_ex: phi_in + m,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceEngagement {
    pub step: usize,
    pub slice: usize,
    /// Machine z where the slice was sampled: the middle of its part inside
    /// the stock's z extent.
    pub z: f64,
    /// Helix lag of this slice's cutting edge.
    pub angular_offset: f64,
    pub frame: AngleFrame,
    pub intervals: Vec<EngagementInterval>,
}

impl SliceEngagement {
    pub fn total_measure(&self) -> f64 {
        self.intervals.iter().map(EngagementInterval::measure).sum()
    }

    pub fn rebased(&self, to: &AngleFrame) -> Vec<EngagementInterval> {
        self.intervals
            .iter()
            .map(|iv| iv.rebase(&self.frame, to))
            .collect()
    }

    /// Engagement seen by the flute reference edge, shifted by the helix lag.
    pub fn flute_intervals(&self) -> Vec<EngagementInterval> {
        self.intervals
            .iter()
            .map(|iv| {
                if iv.is_full() {
                    return *iv;
                }
                let phi_in = wrap_angle(iv.phi_in + self.angular_offset);
                EngagementInterval {
                    phi_in,
                    phi_ex: phi_in + iv.measure(),
                }
            })
            .collect()
    }
}

pub fn sample_count(dphi: f64) -> usize {
    ((2.0 * PI / dphi) - 1e-9).ceil() as usize
}

/// Sample the tool circle at `p` (tool tip) against the current board, one
/// entry per tool slice overlapping the stock's z extent.
pub fn extract_engagement(
    wp: &WorkpieceModel,
    tool: &Tool,
    p: Vec3,
    frame: AngleFrame,
    dphi: f64,
    step: usize,
) -> Result<Vec<SliceEngagement>> {
    if !(dphi > 0.0 && dphi <= MAX_SAMPLE_STEP + 1e-15) {
        return Err(Error::InvalidInput(format!(
            "engagement sampling step must be in (0, 0.5°], got {}°",
            dphi.to_degrees()
        )));
    }
    let n = sample_count(dphi);
    let step_angle = 2.0 * PI / n as f64;
    let r = tool.radius();
    let center = p.xy();
    let cols: Vec<Option<usize>> = (0..n)
        .map(|k| {
            let theta = frame.to_machine(k as f64 * step_angle);
            let (s, c) = theta.sin_cos();
            wp.column_index(Point2::new(center.x + r * c, center.y + r * s))
        })
        .collect();

    let (zmin, zmax) = wp.z_range();
    let slices: Vec<_> = tool
        .slices()
        .into_iter()
        .filter(|s| p.z + s.z_high > zmin && p.z + s.z_low < zmax)
        .collect();

    Ok(slices
        .par_iter()
        .map(|s| {
            // Mid-height of the part of the slice inside the stock's z extent,
            // so a slice straddling the top face still sees the material.
            let z = 0.5 * ((p.z + s.z_low).max(zmin) + (p.z + s.z_high).min(zmax));
            let engaged: Vec<bool> = cols
                .iter()
                .map(|c| c.is_some_and(|idx| wp.is_solid(idx, z)))
                .collect();
            SliceEngagement {
                step,
                slice: s.index,
                z,
                angular_offset: s.angular_offset,
                frame,
                intervals: runs_to_intervals(&engaged, step_angle),
            }
        })
        .collect())
}

/// Contiguous engaged runs (wrapping at k = 0) to intervals. Each boundary is
/// placed half a sample beyond the last engaged sample; single-sample runs
/// are dropped.
pub(crate) fn runs_to_intervals(engaged: &[bool], step_angle: f64) -> Vec<EngagementInterval> {
    let n = engaged.len();
    if n == 0 {
        return Vec::new();
    }
    if engaged.iter().all(|&e| e) {
        return vec![EngagementInterval {
            phi_in: 0.0,
            phi_ex: 2.0 * PI,
        }];
    }
    // Start scanning just after a gap so no run is split by the wrap.
    let start = (0..n).find(|&k| !engaged[k]).unwrap();
    let mut out = Vec::new();
    let mut k = 0;
    while k < n {
        let idx = (start + k) % n;
        if !engaged[idx] {
            k += 1;
            continue;
        }
        let first = start + k;
        while k < n && engaged[(start + k) % n] {
            k += 1;
        }
        let last = start + k - 1;
        if last - first + 1 < 2 {
            continue;
        }
        let a = (first as f64 - 0.5) * step_angle;
        let b = (last as f64 + 0.5) * step_angle;
        let phi_in = wrap_angle(a);
        out.push(EngagementInterval {
            phi_in,
            phi_ex: phi_in + (b - a),
        });
    }
    out.sort_by(|a, b| a.phi_in.total_cmp(&b.phi_in));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dexel::{carve_step, init_workpiece};
    use crate::geometry::Frame;

    const DPHI: f64 = 0.4 * PI / 180.0;

    fn tool() -> Tool {
        Tool::new(10.0, 2, 20.0, 20.0, 0.1).unwrap()
    }

    fn frame0() -> AngleFrame {
        AngleFrame::new(0.0, MillingMode::Down)
    }

    #[test]
    fn runs_wrap_and_noise() {
        let mut e = vec![false; 12];
        for k in [0, 1, 10, 11, 5] {
            e[k] = true;
        }
        let step = 2.0 * PI / 12.0;
        let iv = runs_to_intervals(&e, step);
        assert_eq!(iv.len(), 1);
        assert!((iv[0].measure() - 4.0 * step).abs() < 1e-12);
        assert!((iv[0].phi_in - 9.5 * step).abs() < 1e-12);
        assert!(iv[0].contains(0.0));
        assert!(runs_to_intervals(&[true; 5], 1.0)[0].is_full());
        assert!(runs_to_intervals(&[false; 5], 1.0).is_empty());
    }

    #[test]
    fn angle_frames() {
        let down = AngleFrame::new(0.0, MillingMode::Down);
        // φ = π/2 is on the right of a +x feed for down milling.
        assert!((down.to_machine(PI / 2.0) + PI / 2.0).abs() < 1e-15);
        let up = AngleFrame::new(0.0, MillingMode::Up);
        assert!((up.to_machine(PI / 2.0) - PI / 2.0).abs() < 1e-15);
        let iv = EngagementInterval { phi_in: 0.2, phi_ex: 1.0 };
        let turned = AngleFrame::new(0.5, MillingMode::Down);
        let r = iv.rebase(&down, &turned);
        assert!((r.measure() - 0.8).abs() < 1e-12);
        assert!((down.to_machine(iv.phi_in) - turned.to_machine(r.phi_in)).abs() < 1e-12);
    }

    #[test]
    fn air_gives_nothing() {
        let wp = init_workpiece(Vec3::new(60.0, 60.0, 20.0), &Frame::identity(), 0.1, 2.81e-3).unwrap();
        let e = extract_engagement(&wp, &tool(), Vec3::new(-20.0, 30.0, 18.0), frame0(), DPHI, 0).unwrap();
        assert!(!e.is_empty());
        assert!(e.iter().all(|s| s.intervals.is_empty()));
        let above = extract_engagement(&wp, &tool(), Vec3::new(30.0, 30.0, 25.0), frame0(), DPHI, 0).unwrap();
        assert!(above.is_empty());
    }

    #[test]
    fn steady_full_slot_is_leading_half() {
        let mut wp = init_workpiece(Vec3::new(60.0, 60.0, 20.0), &Frame::identity(), 0.1, 2.81e-3).unwrap();
        let t = tool();
        let mut x = 10.0;
        while x < 30.0 {
            carve_step(&mut wp, &t, Vec3::new(x, 30.0, 18.0), Vec3::new(x + 0.5, 30.0, 18.0), 20.0);
            x += 0.5;
        }
        let e = extract_engagement(&wp, &t, Vec3::new(30.5, 30.0, 18.0), frame0(), DPHI, 1).unwrap();
        assert_eq!(e.len(), 20);
        let ideal = PI + 2.0 * (0.5f64 / 10.0).asin();
        for s in &e {
            assert_eq!(s.intervals.len(), 1, "slice {}", s.slice);
            let iv = s.intervals[0];
            assert!(iv.contains(0.0));
            assert!((iv.measure() - ideal).abs() < 0.3, "measure {}", iv.measure());
            assert!(!iv.contains(PI));
        }
    }

    #[test]
    fn half_immersion_down_milling_quarter() {
        // Material only on the right (−y) of a +x feed along y = 30.
        let mut wp = init_workpiece(Vec3::new(60.0, 30.0, 20.0), &Frame::identity(), 0.1, 2.81e-3).unwrap();
        let t = tool();
        let mut x = 0.0;
        while x < 30.0 {
            carve_step(&mut wp, &t, Vec3::new(x, 30.0, 18.0), Vec3::new(x + 0.5, 30.0, 18.0), 20.0);
            x += 0.5;
        }
        let e = extract_engagement(&wp, &t, Vec3::new(30.5, 30.0, 18.0), frame0(), DPHI, 1).unwrap();
        // acos((R - a_e)/R) with a_e = R, plus the crescent overlap behind.
        let ideal = (0.0f64).acos() + (0.5f64 / 10.0).asin();
        for s in &e {
            assert_eq!(s.intervals.len(), 1);
            let iv = s.intervals[0];
            assert!((iv.measure() - ideal).abs() < 0.3, "measure {}", iv.measure());
            assert!(iv.contains(PI / 4.0));
            assert!(!iv.contains(3.0 * PI / 2.0));
        }
        // Mirrored for up milling: the same arc sits at φ ∈ [3π/2, 2π].
        let up = extract_engagement(&wp, &t, Vec3::new(30.5, 30.0, 18.0), AngleFrame::new(0.0, MillingMode::Up), DPHI, 1).unwrap();
        assert!(up[0].intervals[0].contains(7.0 * PI / 4.0));
        assert!((up[0].total_measure() - e[0].total_measure()).abs() < 2.0 * DPHI);
    }

    #[test]
    fn cross_slot_splits_engagement() {
        let mut wp = init_workpiece(Vec3::new(60.0, 60.0, 20.0), &Frame::identity(), 0.1, 2.81e-3).unwrap();
        let narrow = Tool::new(4.0, 2, 20.0, 20.0, 0.1).unwrap();
        carve_step(&mut wp, &narrow, Vec3::new(40.0, -5.0, 18.0), Vec3::new(40.0, 65.0, 18.0), 20.0);
        let e = extract_engagement(&wp, &tool(), Vec3::new(40.0, 30.0, 18.0), frame0(), DPHI, 0).unwrap();
        // |x − 40| < 2 is air: arcs around θ = 0 and θ = π, each 2·acos(0.4).
        let each = 2.0 * (0.4f64).acos();
        for s in &e {
            assert_eq!(s.intervals.len(), 2);
            for iv in &s.intervals {
                assert!((iv.measure() - each).abs() < 0.1, "{}", iv.measure());
            }
            assert!(s.intervals.iter().any(|iv| iv.contains(0.0)));
            assert!(s.intervals.iter().any(|iv| iv.contains(PI)));
        }
    }

    #[test]
    fn flute_offsets_shift_but_keep_measure() {
        let s = SliceEngagement {
            step: 0,
            slice: 3,
            z: 0.0,
            angular_offset: 0.1,
            frame: frame0(),
            intervals: vec![EngagementInterval { phi_in: 6.2, phi_ex: 6.5 }],
        };
        let f = s.flute_intervals();
        assert!((f[0].measure() - 0.3).abs() < 1e-12);
        assert!((f[0].phi_in - wrap_angle(6.3)).abs() < 1e-12);
    }

    #[test]
    fn coarse_sampling_rejected() {
        let wp = init_workpiece(Vec3::new(10.0, 10.0, 10.0), &Frame::identity(), 0.1, 1e-3).unwrap();
        assert!(extract_engagement(&wp, &tool(), Vec3::ZERO, frame0(), 1.0f64.to_radians(), 0).is_err());
    }
}
