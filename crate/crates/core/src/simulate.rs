//! The n → n+1 recursion along a tool path and the lookup-table output.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::dexel::{carve_step, RemovedSet, WorkpieceModel};
use crate::engagement::{extract_engagement, AngleFrame, MillingMode, SliceEngagement};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Circle2, Vec3};
use crate::mass::{
    removed_area_slice, update_com, update_mass, AreaMethod, MassState, RemovalRecord,
    SliceAreaParams, SliceRemoval,
};
use crate::tool::Tool;
use crate::toolpath::{resample, ToolPath};

/// Largest heading change between steps that still uses the geometric
/// removed area (radians).
pub const MAX_TURN: f64 = 15.0 * PI / 180.0;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub path_step: f64,
    /// Engagement sampling and arc polygonization step (radians).
    pub dphi: f64,
    pub mode: MillingMode,
    /// Axial reach of the cut above the tip; defaults to the flute length.
    pub reach: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            path_step: 0.5,
            dphi: 0.4f64.to_radians(),
            mode: MillingMode::Down,
            reach: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookupRow {
    pub n: usize,
    /// Arc length along the resampled path (mm).
    pub s: f64,
    pub position: Vec3,
    pub mass: f64,
    pub com: Vec3,
    pub removed_volume: f64,
    /// Elapsed time at feed (s), only when the path carries feed rates.
    pub time: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LookupTable {
    pub rows: Vec<LookupRow>,
    /// Written as `#` comment lines above the header.
    pub provenance: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct SimStats {
    pub geometric_slices: usize,
    pub dexel_slices: usize,
    /// Why slices fell back to the dexel measure.
    pub fallback_reasons: BTreeMap<String, usize>,
}

#[derive(Debug)]
pub struct SimulationResult {
    pub table: LookupTable,
    pub removals: Vec<RemovalRecord>,
    pub workpiece: WorkpieceModel,
    pub path: ToolPath,
    pub stats: SimStats,
    /// Dexel-measured volume lost by the board over the whole run.
    pub dexel_removed_volume: f64,
}

impl SimulationResult {
    pub fn final_state(&self) -> &LookupRow {
        self.table.rows.last().expect("table has an initial row")
    }

    pub fn total_removed_volume(&self) -> f64 {
        self.removals.iter().map(|r| r.volume).sum()
    }
}

/// Simulate `path` over `wp`, returning one lookup row per resampled position.
pub fn run_path(wp: WorkpieceModel, tool: &Tool, path: &ToolPath, cfg: &SimConfig) -> Result<SimulationResult> {
    run_path_with(wp, tool, path, cfg, |_, _, _| {})
}

/// [`run_path`] with a hook called after every step with the carved board,
/// the new lookup row and the step's removal record.
pub fn run_path_with<F>(
    mut wp: WorkpieceModel,
    tool: &Tool,
    path: &ToolPath,
    cfg: &SimConfig,
    mut observe: F,
) -> Result<SimulationResult>
where
    F: FnMut(&WorkpieceModel, &LookupRow, &RemovalRecord),
{
    let path = resample(path, cfg.path_step)?;
    let rho = wp.density();
    let reach = cfg.reach.unwrap_or(tool.flute_length);
    let slices = tool.slices();
    let r = tool.radius();
    let h = wp.spacing();
    let v0 = wp.volume();
    let mut stats = SimStats::default();

    let mut state = MassState::initial(wp.initial_volume(), wp.initial_com(), rho);
    let mut table = LookupTable::default();
    let mut removals = Vec::new();
    let Some(first) = path.positions.first() else {
        return Ok(SimulationResult {
            table,
            removals,
            workpiece: wp,
            path,
            stats,
            dexel_removed_volume: 0.0,
        });
    };
    let timed = path.has_feed();
    let mut s = 0.0;
    let mut t = timed.then_some(0.0);
    table.rows.push(LookupRow {
        n: 0,
        s,
        position: first.position,
        mass: state.mass,
        com: state.com,
        removed_volume: 0.0,
        time: t,
    });

    let mut heading = path
        .positions
        .windows(2)
        .map(|w| w[1].position.xy() - w[0].position.xy())
        .find(|d| d.norm() > 1e-12)
        .map_or(0.0, |d| d.y.atan2(d.x));
    let mut prev: Option<Vec<SliceEngagement>> = None;

    for (n, w) in path.positions.windows(2).enumerate() {
        let (p_n, p_n1) = (w[0].position, w[1].position);
        let d = p_n1.xy() - p_n.xy();
        let step_xy = d.norm();
        let mut turn = 0.0;
        if step_xy > 1e-12 {
            let h_new = d.y.atan2(d.x);
            turn = (wrap_angle(h_new - heading + PI) - PI).abs();
            heading = h_new;
        }
        let frame = AngleFrame::new(heading, cfg.mode);
        let eng_n1 = extract_engagement(&wp, tool, p_n1, frame, cfg.dphi, n + 1)?;
        let removed = carve_step(&mut wp, tool, p_n, p_n1, reach);

        let horizontal = (p_n1.z - p_n.z).abs() < 1e-12 && step_xy > 1e-12;
        // Engagement at n was seen while moving in the old direction; across a
        // sharp corner it no longer bounds what this step removes.
        let smooth = turn <= MAX_TURN;
        let per_slice = match (&prev, horizontal && smooth) {
            (Some(eng_n), true) if !removed.is_empty() || eng_n1.iter().any(|e| !e.intervals.is_empty()) => {
                let params = SliceAreaParams {
                    dphi: cfg.dphi,
                    end_tolerance: r * (1.5 * h / step_xy).min(0.5) + 2.0 * r * cfg.dphi,
                    mismatch_ratio: 0.2,
                };
                let by_slice: BTreeMap<usize, &SliceEngagement> =
                    eng_n.iter().map(|e| (e.slice, e)).collect();
                let c_n = Circle2::new(p_n.xy(), r)?;
                let c_n1 = Circle2::new(p_n1.xy(), r)?;
                let (zmin, zmax) = wp.z_range();
                let results: Vec<(SliceRemoval, Option<String>)> = eng_n1
                    .par_iter()
                    .map(|e| {
                        let ds = &slices[e.slice];
                        let z_low = (p_n1.z + ds.z_low).max(zmin);
                        let z_high = (p_n1.z + ds.z_high).min(zmax);
                        let height = (z_high - z_low).max(0.0);
                        let before = by_slice
                            .get(&e.slice)
                            .map(|p| p.rebased(&frame))
                            .unwrap_or_default();
                        let geometric = if e.intervals.is_empty() && !before.is_empty() {
                            // Leaving the stock: material between the two circles
                            // has no partner arc at n+1.
                            Err("exit".to_string())
                        } else {
                            removed_area_slice(&c_n, &c_n1, &before, &e.intervals, &frame, &params)
                                .map_err(|err| reason(&err))
                        };
                        match geometric {
                            Ok(a) => (
                                SliceRemoval {
                                    slice: e.slice,
                                    z: 0.5 * (z_low + z_high),
                                    height,
                                    area: a.area,
                                    centroid: a.centroid,
                                    method: AreaMethod::Geometric,
                                },
                                None,
                            ),
                            Err(why) => (
                                dexel_slice(&removed, e.slice, p_n1.z + ds.z_low, p_n1.z + ds.z_high),
                                Some(why),
                            ),
                        }
                    })
                    .collect();
                let mut out = Vec::with_capacity(results.len());
                for (sr, why) in results {
                    if let Some(why) = why {
                        *stats.fallback_reasons.entry(why).or_default() += 1;
                    }
                    if sr.area > 0.0 && sr.centroid.is_some() {
                        out.push(sr);
                    }
                }
                out
            }
            _ => {
                if !removed.is_empty() {
                    let why = if prev.is_none() {
                        "first step"
                    } else if step_xy <= 1e-12 {
                        "plunge"
                    } else if !horizontal {
                        "ramp"
                    } else {
                        "corner"
                    };
                    *stats.fallback_reasons.entry(why.to_string()).or_default() += 1;
                }
                dexel_bins(&removed, p_n.z.min(p_n1.z), tool.disk_height)
            }
        };
        for sr in &per_slice {
            match sr.method {
                AreaMethod::Geometric => stats.geometric_slices += 1,
                AreaMethod::Dexel => stats.dexel_slices += 1,
            }
        }

        let rec = RemovalRecord::from_slices(n + 1, rho, per_slice);
        let com = update_com(&state, &rec)?;
        state = update_mass(&state, &rec)?;
        state.com = com;

        s += p_n1.distance(p_n);
        if let (Some(tt), Some(f)) = (t.as_mut(), w[1].feed) {
            if f > 0.0 {
                *tt += p_n1.distance(p_n) / f * 60.0;
            }
        }
        table.rows.push(LookupRow {
            n: n + 1,
            s,
            position: p_n1,
            mass: state.mass,
            com: state.com,
            removed_volume: rec.volume,
            time: t,
        });
        observe(&wp, table.rows.last().unwrap(), &rec);
        removals.push(rec);
        prev = Some(eng_n1);
    }

    let dexel_removed_volume = v0 - wp.volume();
    log::info!(
        "{} steps: {} geometric slices, {} dexel slices, fallbacks {:?}",
        removals.len(),
        stats.geometric_slices,
        stats.dexel_slices,
        stats.fallback_reasons
    );
    Ok(SimulationResult {
        table,
        removals,
        workpiece: wp,
        path,
        stats,
        dexel_removed_volume,
    })
}

fn reason(e: &crate::mass::SliceAreaError) -> String {
    use crate::mass::SliceAreaError::*;
    match e {
        SelfIntersectingRegion => "self-intersecting",
        UnpairedEntry => "unpaired entry",
        MeasureMismatch { .. } => "measure mismatch",
        FullEngagement => "full engagement",
        NegativeArea { .. } => "negative area",
    }
    .to_string()
}

fn dexel_slice(removed: &RemovedSet, slice: usize, z_low: f64, z_high: f64) -> SliceRemoval {
    let height = z_high - z_low;
    let (v, c) = removed.slice_measure(z_low, z_high);
    SliceRemoval {
        slice,
        z: 0.5 * (z_low + z_high),
        height,
        area: if height > 0.0 { v / height } else { 0.0 },
        centroid: c,
        method: AreaMethod::Dexel,
    }
}

/// Bin a removed set into disk-height layers starting at `z_base`.
fn dexel_bins(removed: &RemovedSet, z_base: f64, b: f64) -> Vec<SliceRemoval> {
    if removed.is_empty() {
        return Vec::new();
    }
    let lo = removed.dexels.iter().map(|d| d.z0).fold(f64::INFINITY, f64::min);
    let hi = removed.dexels.iter().map(|d| d.z1).fold(f64::NEG_INFINITY, f64::max);
    let k0 = ((lo - z_base) / b).floor() as i64;
    let k1 = ((hi - z_base) / b).ceil() as i64;
    (k0..k1)
        .into_par_iter()
        .map(|k| {
            let z_low = z_base + k as f64 * b;
            dexel_slice(removed, k.max(0) as usize, z_low, z_low + b)
        })
        .filter(|s| s.area > 0.0 && s.centroid.is_some())
        .collect()
}

/// `printf("%.9g")`: nine significant digits, trailing zeros trimmed.
pub fn fmt_g9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.8e}", x);
    let (mant, exp) = sci.split_once('e').expect("exponent format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..9).contains(&exp) {
        let mant = trim_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mant}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

const LOOKUP_HEADER: &str = "n,s_mm,x_mm,y_mm,z_mm,m_g,cx_mm,cy_mm,cz_mm,Vr_mm3";

impl LookupTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for line in &self.provenance {
            writeln!(w, "# {line}")?;
        }
        let timed = self.rows.iter().any(|r| r.time.is_some());
        if timed {
            writeln!(w, "{LOOKUP_HEADER},t_s")?;
        } else {
            writeln!(w, "{LOOKUP_HEADER}")?;
        }
        for r in &self.rows {
            write!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.n,
                fmt_g9(r.s),
                fmt_g9(r.position.x),
                fmt_g9(r.position.y),
                fmt_g9(r.position.z),
                fmt_g9(r.mass),
                fmt_g9(r.com.x),
                fmt_g9(r.com.y),
                fmt_g9(r.com.z),
                fmt_g9(r.removed_volume)
            )?;
            if timed {
                write!(w, ",{}", r.time.map(fmt_g9).unwrap_or_default())?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(false)
            .from_reader(r);
        let header = rdr
            .headers()
            .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
            .clone();
        let cols: Vec<&str> = header.iter().collect();
        let base: Vec<&str> = LOOKUP_HEADER.split(',').collect();
        let timed = match cols.len() {
            10 if cols == base => false,
            11 if cols[..10] == base[..] && cols[10] == "t_s" => true,
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected lookup header `{LOOKUP_HEADER}`"),
                })
            }
        };
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let f = |i: usize| -> Result<f64> {
                rec[i].parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("bad number `{}` in column {}", &rec[i], i + 1),
                })
            };
            rows.push(LookupRow {
                n: rec[0].parse().map_err(|_| Error::Parse { line, message: format!("bad step index `{}`", &rec[0]) })?,
                s: f(1)?,
                position: Vec3::new(f(2)?, f(3)?, f(4)?),
                mass: f(5)?,
                com: Vec3::new(f(6)?, f(7)?, f(8)?),
                removed_volume: f(9)?,
                time: if timed && !rec[10].is_empty() { Some(f(10)?) } else { None },
            });
        }
        Ok(LookupTable { rows, provenance: Vec::new() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

/// Per-step removal series `n,Vr_mm3,crx,cry,crz`; centroid fields are empty
/// on steps that removed nothing.
pub fn write_removals<W: Write>(removals: &[RemovalRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "n,Vr_mm3,crx,cry,crz")?;
    for r in removals {
        match r.centroid {
            Some(c) => writeln!(
                w,
                "{},{},{},{},{}",
                r.n,
                fmt_g9(r.volume),
                fmt_g9(c.x),
                fmt_g9(c.y),
                fmt_g9(c.z)
            )?,
            None => writeln!(w, "{},{},,,", r.n, fmt_g9(r.volume))?,
        }
    }
    Ok(())
}
