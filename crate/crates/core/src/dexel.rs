//! Dexel-board stock model.
//!
//! The board is a uniform x/y grid in the machine frame; every cell holds the
//! sorted solid z-spans of the stock above its center. With the tool axis
//! fixed along machine +z, sweeping a flat end mill reduces to one interval
//! subtraction per touched column.

use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::{Frame, Point2, Vec3};
use crate::tool::Tool;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub z0: f64,
    pub z1: f64,
}

impl Span {
    pub fn len(&self) -> f64 {
        self.z1 - self.z0
    }
}

#[derive(Debug, Clone)]
pub struct WorkpieceModel {
    origin: Point2,
    spacing: f64,
    nx: usize,
    ny: usize,
    columns: Vec<Vec<Span>>,
    density: f64,
    initial_volume: f64,
    initial_com: Vec3,
    z_min: f64,
    z_max: f64,
}

/// Build a board for the box `[0, dims]` placed by `tilt` (local → machine).
pub fn init_workpiece(
    box_dims: Vec3,
    tilt: &Frame,
    grid_spacing: f64,
    density: f64,
) -> Result<WorkpieceModel> {
    if !(box_dims.x > 0.0 && box_dims.y > 0.0 && box_dims.z > 0.0) || !box_dims.is_finite() {
        return Err(Error::InvalidInput(format!(
            "box dimensions must be positive, got {box_dims:?}"
        )));
    }
    if !(grid_spacing > 0.0) {
        return Err(Error::InvalidInput(format!(
            "grid spacing must be positive, got {grid_spacing}"
        )));
    }
    if !(density > 0.0 && density.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "density must be positive, got {density}"
        )));
    }
    let limit = box_dims.x.min(box_dims.y).min(box_dims.z) / 10.0;
    if grid_spacing > limit {
        return Err(Error::GridTooCoarse {
            spacing: grid_spacing,
            limit,
        });
    }

    let corners: Vec<Vec3> = (0..8)
        .map(|k| {
            tilt.apply(Vec3::new(
                if k & 1 == 0 { 0.0 } else { box_dims.x },
                if k & 2 == 0 { 0.0 } else { box_dims.y },
                if k & 4 == 0 { 0.0 } else { box_dims.z },
            ))
        })
        .collect();
    let min = |f: fn(&Vec3) -> f64| corners.iter().map(f).fold(f64::INFINITY, f64::min);
    let max = |f: fn(&Vec3) -> f64| corners.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let (x0, x1) = (min(|p| p.x), max(|p| p.x));
    let (y0, y1) = (min(|p| p.y), max(|p| p.y));
    let nx = (((x1 - x0) / grid_spacing) - 1e-9).ceil().max(1.0) as usize;
    let ny = (((y1 - y0) / grid_spacing) - 1e-9).ceil().max(1.0) as usize;
    let origin = Point2::new(x0, y0);

    // Vertical line through a cell center, in box coordinates:
    // local(z) = base + z·dir, clipped against [0, dims] per axis.
    let dir = tilt.unrotate(Vec3::new(0.0, 0.0, 1.0));
    let dims = box_dims.to_array();
    let mut columns = Vec::with_capacity(nx * ny);
    let (mut zlo, mut zhi) = (f64::INFINITY, f64::NEG_INFINITY);
    for iy in 0..ny {
        for ix in 0..nx {
            let cx = x0 + (ix as f64 + 0.5) * grid_spacing;
            let cy = y0 + (iy as f64 + 0.5) * grid_spacing;
            let base = tilt.inverse_apply(Vec3::new(cx, cy, 0.0)).to_array();
            let d = dir.to_array();
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for k in 0..3 {
                if d[k].abs() < 1e-15 {
                    if base[k] < 0.0 || base[k] > dims[k] {
                        lo = f64::INFINITY;
                    }
                    continue;
                }
                let a = (0.0 - base[k]) / d[k];
                let b = (dims[k] - base[k]) / d[k];
                lo = lo.max(a.min(b));
                hi = hi.min(a.max(b));
            }
            if hi > lo {
                zlo = zlo.min(lo);
                zhi = zhi.max(hi);
                columns.push(vec![Span { z0: lo, z1: hi }]);
            } else {
                columns.push(Vec::new());
            }
        }
    }
    Ok(WorkpieceModel {
        origin,
        spacing: grid_spacing,
        nx,
        ny,
        columns,
        density,
        initial_volume: box_dims.x * box_dims.y * box_dims.z,
        initial_com: tilt.apply(box_dims * 0.5),
        z_min: zlo,
        z_max: zhi,
    })
}

impl WorkpieceModel {
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing * self.spacing
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn density(&self) -> f64 {
        self.density
    }

    /// Box volume from the stock definition.
    pub fn initial_volume(&self) -> f64 {
        self.initial_volume
    }

    /// Box center from the stock definition.
    pub fn initial_com(&self) -> Vec3 {
        self.initial_com
    }

    /// z extent of the initial stock.
    pub fn z_range(&self) -> (f64, f64) {
        (self.z_min, self.z_max)
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Point2 {
        Point2::new(
            self.origin.x + (ix as f64 + 0.5) * self.spacing,
            self.origin.y + (iy as f64 + 0.5) * self.spacing,
        )
    }

    pub fn column(&self, ix: usize, iy: usize) -> &[Span] {
        &self.columns[iy * self.nx + ix]
    }

    /// Index of the column whose cell contains `p`.
    pub fn column_index(&self, p: Point2) -> Option<usize> {
        let fx = ((p.x - self.origin.x) / self.spacing).floor();
        let fy = ((p.y - self.origin.y) / self.spacing).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.nx as f64 || fy >= self.ny as f64 {
            return None;
        }
        Some(fy as usize * self.nx + fx as usize)
    }

    pub fn column_by_index(&self, idx: usize) -> &[Span] {
        &self.columns[idx]
    }

    pub fn is_solid(&self, idx: usize, z: f64) -> bool {
        self.columns[idx].iter().any(|s| s.z0 <= z && z < s.z1)
    }

    pub fn volume(&self) -> f64 {
        let len: f64 = self
            .columns
            .iter()
            .flat_map(|c| c.iter())
            .map(Span::len)
            .sum();
        len * self.cell_area()
    }

    pub fn mass(&self) -> f64 {
        self.density * self.volume()
    }

    /// Centroid of the dexel material.
    pub fn centroid(&self) -> Vec3 {
        let mut acc = Vec3::ZERO;
        let mut vol = 0.0;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let c = self.cell_center(ix, iy);
                for s in self.column(ix, iy) {
                    let l = s.len();
                    vol += l;
                    acc += Vec3::new(c.x, c.y, 0.5 * (s.z0 + s.z1)) * l;
                }
            }
        }
        acc * (1.0 / vol)
    }

    /// Support function of the union of solid dexel cells: max of `u·x` over
    /// the material.
    pub fn support(&self, u: Vec3) -> f64 {
        let half = 0.5 * self.spacing;
        let mut best = f64::NEG_INFINITY;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let col = self.column(ix, iy);
                if col.is_empty() {
                    continue;
                }
                let c = self.cell_center(ix, iy);
                let planar = u.x * c.x + u.x.abs() * half + u.y * c.y + u.y.abs() * half;
                for s in col {
                    best = best.max(planar + (u.z * s.z0).max(u.z * s.z1));
                }
            }
        }
        best
    }

    /// Visualization dump: one row per solid span.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x_mm,y_mm,z0_mm,z1_mm")?;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let c = self.cell_center(ix, iy);
                for s in self.column(ix, iy) {
                    writeln!(w, "{},{},{},{}", c.x, c.y, s.z0, s.z1)?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemovedDexel {
    pub column: usize,
    pub x: f64,
    pub y: f64,
    pub z0: f64,
    pub z1: f64,
}

/// Material cleared by one carve step.
#[derive(Debug, Clone, Default)]
pub struct RemovedSet {
    pub cell_area: f64,
    pub dexels: Vec<RemovedDexel>,
}

impl RemovedSet {
    pub fn is_empty(&self) -> bool {
        self.dexels.is_empty()
    }

    pub fn volume(&self) -> f64 {
        self.dexels.iter().map(|d| d.z1 - d.z0).sum::<f64>() * self.cell_area
    }

    /// Removed volume inside `[z_low, z_high]` and its planar centroid.
    pub fn slice_measure(&self, z_low: f64, z_high: f64) -> (f64, Option<Point2>) {
        let mut len = 0.0;
        let mut mx = 0.0;
        let mut my = 0.0;
        for d in &self.dexels {
            let l = d.z1.min(z_high) - d.z0.max(z_low);
            if l > 0.0 {
                len += l;
                mx += d.x * l;
                my += d.y * l;
            }
        }
        if len > 0.0 {
            (len * self.cell_area, Some(Point2::new(mx / len, my / len)))
        } else {
            (0.0, None)
        }
    }
}

/// Parameter range `[t0, t1] ⊂ [0, 1]` over which the tool axis passes
/// within `radius` of `q` while its xy position moves `a → b`.
pub(crate) fn disk_pass_interval(q: Point2, a: Point2, b: Point2, radius: f64) -> Option<(f64, f64)> {
    let d = b - a;
    let w = q - a;
    let dd = d.dot(d);
    let r2 = radius * radius;
    if dd < 1e-18 {
        return (w.dot(w) <= r2).then_some((0.0, 1.0));
    }
    let wd = w.dot(d);
    let disc = wd * wd - dd * (w.dot(w) - r2);
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = ((wd - sq) / dd).max(0.0);
    let t1 = ((wd + sq) / dd).min(1.0);
    (t0 <= t1).then_some((t0, t1))
}

/// Subtract the volume swept by the tool moving `p_n → p_n1` from the board.
///
/// The tool clears `[tip, tip + reach]` along +z over its circular footprint.
/// Returns exactly the spans that were removed.
pub fn carve_step(
    wp: &mut WorkpieceModel,
    tool: &Tool,
    p_n: Vec3,
    p_n1: Vec3,
    reach: f64,
) -> RemovedSet {
    let r = tool.radius();
    let h = wp.spacing;
    let a = p_n.xy();
    let b = p_n1.xy();
    let ix0 = (((a.x.min(b.x) - r - wp.origin.x) / h).floor().max(0.0)) as usize;
    let iy0 = (((a.y.min(b.y) - r - wp.origin.y) / h).floor().max(0.0)) as usize;
    let ix1 = (((a.x.max(b.x) + r - wp.origin.x) / h).ceil().max(0.0) as usize).min(wp.nx);
    let iy1 = (((a.y.max(b.y) + r - wp.origin.y) / h).ceil().max(0.0) as usize).min(wp.ny);

    let mut removed = RemovedSet {
        cell_area: wp.cell_area(),
        dexels: Vec::new(),
    };
    for iy in iy0..iy1 {
        for ix in ix0..ix1 {
            let idx = iy * wp.nx + ix;
            if wp.columns[idx].is_empty() {
                continue;
            }
            let q = wp.cell_center(ix, iy);
            let Some((t0, t1)) = disk_pass_interval(q, a, b, r) else {
                continue;
            };
            let za = p_n.z + t0 * (p_n1.z - p_n.z);
            let zb = p_n.z + t1 * (p_n1.z - p_n.z);
            let lo = za.min(zb);
            let hi = za.max(zb) + reach;
            let col = &mut wp.columns[idx];
            if !col.iter().any(|s| s.z1 > lo && s.z0 < hi) {
                continue;
            }
            let mut kept = Vec::with_capacity(col.len() + 1);
            for s in col.iter() {
                if s.z1 <= lo || s.z0 >= hi {
                    kept.push(*s);
                    continue;
                }
                if s.z0 < lo {
                    kept.push(Span { z0: s.z0, z1: lo });
                }
                removed.dexels.push(RemovedDexel {
                    column: idx,
                    x: q.x,
                    y: q.y,
                    z0: s.z0.max(lo),
                    z1: s.z1.min(hi),
                });
                if s.z1 > hi {
                    kept.push(Span { z0: hi, z1: s.z1 });
                }
            }
            *col = kept;
        }
    }
    removed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::tilt_transform;
    use std::f64::consts::PI;

    fn tool() -> Tool {
        Tool::new(10.0, 2, 20.0, 20.0, 0.1).unwrap()
    }

    fn blank() -> WorkpieceModel {
        init_workpiece(Vec3::new(60.0, 60.0, 20.0), &Frame::identity(), 0.1, 2.81e-3).unwrap()
    }

    #[test]
    fn untilted_box() {
        let wp = blank();
        assert!((wp.volume() - 72000.0).abs() < 1e-6);
        let c = wp.centroid();
        assert!(c.distance(Vec3::new(30.0, 30.0, 10.0)) < 1e-9);
        assert!((wp.initial_volume() * wp.density() - 202.32).abs() < 1e-9);
        assert_eq!(wp.z_range(), (0.0, 20.0));
    }

    #[test]
    fn tilted_box_keeps_volume_and_center() {
        let frame = tilt_transform(20.0, Vec3::new(1.0, 0.0, 0.0));
        for h in [0.25, 0.1] {
            let wp = init_workpiece(Vec3::new(60.0, 60.0, 20.0), &frame, h, 2.81e-3).unwrap();
            let v = wp.volume();
            assert!((v - 72000.0).abs() / 72000.0 < 0.005, "h={h} v={v}");
            let want = frame.apply(Vec3::new(30.0, 30.0, 10.0));
            assert!(wp.centroid().distance(want) < h, "h={h}");
            assert!(wp.initial_com().distance(want) < 1e-12);
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        let r = init_workpiece(Vec3::new(60.0, 60.0, 20.0), &Frame::identity(), 2.5, 1e-3);
        assert!(matches!(r, Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn air_cut_is_empty() {
        let mut wp = blank();
        let before = wp.volume();
        let rem = carve_step(&mut wp, &tool(), Vec3::new(-20.0, 10.0, 5.0), Vec3::new(-20.0, 50.0, 5.0), 20.0);
        assert!(rem.is_empty());
        assert_eq!(wp.volume(), before);
    }

    #[test]
    fn plunge_cylinder_volume() {
        let mut wp = blank();
        let p = Vec3::new(30.0, 30.0, 18.0);
        let before = wp.volume();
        let rem = carve_step(&mut wp, &tool(), p, p, 20.0);
        let v = rem.volume();
        let exact = PI * 25.0 * 2.0;
        assert!((v - exact).abs() / exact < 0.01, "{v} vs {exact}");
        assert!((before - wp.volume() - v).abs() < 1e-9 * before);
        let again = carve_step(&mut wp, &tool(), p, p, 20.0);
        assert!(again.is_empty());
    }

    #[test]
    fn slot_twice_removes_nothing_second_time() {
        let mut wp = blank();
        let a = Vec3::new(5.0, 30.0, 18.0);
        let b = Vec3::new(25.0, 30.0, 18.0);
        let first = carve_step(&mut wp, &tool(), a, b, 20.0);
        let exact = (2.0 * 5.0 * 20.0 + PI * 25.0) * 2.0;
        assert!((first.volume() - exact).abs() / exact < 0.01);
        assert!(carve_step(&mut wp, &tool(), a, b, 20.0).is_empty());
    }

    #[test]
    fn ramp_clears_between_tip_heights() {
        let mut wp = blank();
        let col = wp.column_index(Point2::new(30.05, 30.05)).unwrap();
        carve_step(&mut wp, &tool(), Vec3::new(20.0, 30.0, 19.0), Vec3::new(40.0, 30.0, 17.0), 20.0);
        // The lowest tip height over this column is reached as the footprint
        // leaves it, at x = 35.05 where the tip is at 19 - 2·0.7525.
        let spans = wp.column_by_index(col);
        assert_eq!(spans.len(), 1);
        assert!((spans[0].z1 - 17.495).abs() < 1e-3, "{:?}", spans);
    }

    #[test]
    fn slice_measure_splits_by_height() {
        let mut wp = blank();
        let p = Vec3::new(30.0, 30.0, 19.0);
        let rem = carve_step(&mut wp, &tool(), p, p, 20.0);
        let (v_lo, c_lo) = rem.slice_measure(19.0, 19.5);
        let (v_hi, _) = rem.slice_measure(19.5, 20.0);
        assert!((v_lo - v_hi).abs() < 1e-9);
        assert!((v_lo + v_hi - rem.volume()).abs() < 1e-9);
        let c = c_lo.unwrap();
        assert!(c.distance(Point2::new(30.0, 30.0)) < 0.01);
        assert_eq!(rem.slice_measure(20.0, 20.1).0, 0.0);
    }

    #[test]
    fn support_bounds_material() {
        let wp = blank();
        assert!((wp.support(Vec3::new(0.0, 0.0, 1.0)) - 20.0).abs() < 1e-12);
        assert!((wp.support(Vec3::new(-1.0, 0.0, 0.0)) - 0.0).abs() < 1e-12);
    }

    #[test]
    fn csv_dump_header() {
        let wp = init_workpiece(Vec3::new(2.0, 2.0, 2.0), &Frame::identity(), 0.2, 1e-3).unwrap();
        let mut buf = Vec::new();
        wp.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("x_mm,y_mm,z0_mm,z1_mm\n"));
        assert_eq!(s.lines().count(), 1 + 100);
    }
}
