//! Tool paths: CSV and linear G-code input, resampling, CSV output.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToolPosition {
    /// Tool tip in the machine frame (mm).
    pub position: Vec3,
    /// Feed rate in mm/min, when the source provided one.
    pub feed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ToolPath {
    pub positions: Vec<ToolPosition>,
    pub source: Option<PathBuf>,
    pub resample_step: Option<f64>,
}

impl ToolPath {
    pub fn from_points(points: impl IntoIterator<Item = Vec3>) -> Self {
        let mut p = ToolPath::default();
        for position in points {
            p.push(ToolPosition { position, feed: None });
        }
        p
    }

    /// Appends unless the position repeats the previous one.
    pub fn push(&mut self, tp: ToolPosition) {
        if let Some(last) = self.positions.last_mut() {
            if last.position == tp.position {
                if tp.feed.is_some() {
                    last.feed = tp.feed;
                }
                return;
            }
        }
        self.positions.push(tp);
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.positions.iter().map(|p| p.position)
    }

    pub fn has_feed(&self) -> bool {
        self.positions.iter().any(|p| p.feed.is_some())
    }

    pub fn length(&self) -> f64 {
        self.positions
            .windows(2)
            .map(|w| w[1].position.distance(w[0].position))
            .sum()
    }

    /// Write as `x_mm,y_mm,z_mm[,f_mm_min]`. Shortest round-trip float
    /// formatting keeps `load_path(write(p)) == p` bit-exact.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let feed = self.has_feed();
        let csv_err = |e: csv::Error| Error::InvalidInput(format!("csv write: {e}"));
        if feed {
            out.write_record(["x_mm", "y_mm", "z_mm", "f_mm_min"]).map_err(csv_err)?;
        } else {
            out.write_record(["x_mm", "y_mm", "z_mm"]).map_err(csv_err)?;
        }
        for p in &self.positions {
            let mut rec = vec![
                p.position.x.to_string(),
                p.position.y.to_string(),
                p.position.z.to_string(),
            ];
            if feed {
                rec.push(p.feed.map(|f| f.to_string()).unwrap_or_default());
            }
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Load a path from `file`: `.csv` files by header, anything else as G-code.
pub fn load_path(file: &Path) -> Result<ToolPath> {
    let text = std::fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
    let is_csv = file
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let mut path = if is_csv {
        parse_csv(text.as_bytes())?
    } else {
        parse_gcode(text.as_bytes())?
    };
    if path.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: format!("{} contains no tool positions", file.display()),
        });
    }
    path.source = Some(file.to_path_buf());
    Ok(path)
}

pub fn parse_csv<R: std::io::Read>(r: R) -> Result<ToolPath> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(r);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .iter()
        .map(str::to_owned)
        .collect();
    let with_feed = match header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["x_mm", "y_mm", "z_mm"] => false,
        ["x_mm", "y_mm", "z_mm", "f_mm_min"] => true,
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header x_mm,y_mm,z_mm[,f_mm_min], got {}", header.join(",")),
            })
        }
    };
    let mut path = ToolPath::default();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let num = |i: usize| -> Result<f64> {
            let s = rec.get(i).unwrap_or("");
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse { line, message: format!("bad number `{s}` in column {}", i + 1) }),
            }
        };
        let position = Vec3::new(num(0)?, num(1)?, num(2)?);
        let feed = if with_feed && !rec.get(3).unwrap_or("").is_empty() {
            Some(num(3)?)
        } else {
            None
        };
        path.push(ToolPosition { position, feed });
    }
    Ok(path)
}

/// Linear G-code subset: modal G0/G1 with X/Y/Z/F in absolute millimetres.
pub fn parse_gcode<R: BufRead>(r: R) -> Result<ToolPath> {
    let mut path = ToolPath::default();
    let mut pos: [Option<f64>; 3] = [None; 3];
    let mut feed: Option<f64> = None;
    for (i, line) in r.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
        let code = strip_comments(&line);
        if code.trim() == "%" {
            continue;
        }
        let mut moved = false;
        let mut words = Vec::new();
        let mut chars = code.char_indices().peekable();
        while let Some((start, c)) = chars.next() {
            if c.is_whitespace() {
                continue;
            }
            if !c.is_ascii_alphabetic() {
                return Err(Error::Parse { line: lineno, message: format!("unexpected `{c}`") });
            }
            let mut end = start + c.len_utf8();
            while let Some(&(j, d)) = chars.peek() {
                if d.is_ascii_alphabetic() {
                    break;
                }
                end = j + d.len_utf8();
                chars.next();
            }
            let value: String = code[start + 1..end].chars().filter(|c| !c.is_whitespace()).collect();
            words.push((c.to_ascii_uppercase(), value));
        }
        for (letter, value) in words {
            let num = || -> Result<f64> {
                value.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: format!("bad value `{letter}{value}`"),
                })
            };
            match letter {
                'G' => {
                    let g = num()?;
                    match g as i64 {
                        0 | 1 | 17 | 21 | 90 | 94 if g.fract() == 0.0 => {}
                        2 | 3 if g.fract() == 0.0 => {
                            return Err(Error::UnsupportedMotion { line: lineno, code: format!("G{value}") })
                        }
                        20 => {
                            return Err(Error::Parse { line: lineno, message: "inch units (G20) are not supported".into() })
                        }
                        91 => {
                            return Err(Error::Parse { line: lineno, message: "incremental mode (G91) is not supported".into() })
                        }
                        _ => log::warn!("line {lineno}: ignoring G{value}"),
                    }
                }
                'X' | 'Y' | 'Z' => {
                    let k = (letter as u8 - b'X') as usize;
                    pos[k] = Some(num()?);
                    moved = true;
                }
                'F' => feed = Some(num()?),
                'N' => {}
                _ => log::warn!("line {lineno}: ignoring word {letter}{value}"),
            }
        }
        if moved {
            if let [Some(x), Some(y), Some(z)] = pos {
                path.push(ToolPosition { position: Vec3::new(x, y, z), feed });
            }
        }
    }
    Ok(path)
}

fn strip_comments(line: &str) -> String {
    let line = line.split(';').next().unwrap_or("");
    let mut out = String::with_capacity(line.len());
    let mut depth = 0;
    for c in line.chars() {
        match c {
            '(' => depth += 1,
            ')' if depth > 0 => depth -= 1,
            _ if depth == 0 => out.push(c),
            _ => {}
        }
    }
    out
}

/// Insert evenly spaced points so no segment exceeds `step`. Original
/// vertices are kept bit-exact; inserted points inherit the segment's
/// target feed.
pub fn resample(path: &ToolPath, step: f64) -> Result<ToolPath> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidInput(format!("resample step must be > 0, got {step}")));
    }
    let mut out = ToolPath {
        positions: Vec::with_capacity(path.len()),
        source: path.source.clone(),
        resample_step: Some(step),
    };
    let Some(first) = path.positions.first() else {
        return Ok(out);
    };
    out.positions.push(*first);
    for w in path.positions.windows(2) {
        let (a, b) = (w[0].position, w[1].position);
        let len = b.distance(a);
        let k = ((len / step) - 1e-9).ceil().max(1.0) as usize;
        for j in 1..k {
            let t = j as f64 / k as f64;
            out.positions.push(ToolPosition {
                position: a + (b - a) * t,
                feed: w[1].feed,
            });
        }
        out.positions.push(w[1]);
    }
    Ok(out)
}
