//! Flat end mill and its axial decomposition into disk slices.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tool {
    pub diameter: f64,
    /// Carried for completeness; removed volume does not depend on it.
    pub flute_count: u32,
    pub helix_angle_deg: f64,
    pub flute_length: f64,
    pub disk_height: f64,
}

/// One axial tool element, measured from the tool tip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskSlice {
    pub index: usize,
    pub z_low: f64,
    pub z_high: f64,
    /// Helix lag of the cutting edge at the slice mid-height (radians).
    pub angular_offset: f64,
}

impl DiskSlice {
    pub fn height(&self) -> f64 {
        self.z_high - self.z_low
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.z_low + self.z_high)
    }
}

impl Tool {
    pub fn new(
        diameter: f64,
        flute_count: u32,
        helix_angle_deg: f64,
        flute_length: f64,
        disk_height: f64,
    ) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(diameter > 0.0 && diameter.is_finite()) {
            return bad(format!("tool diameter must be > 0, got {diameter}"));
        }
        if flute_count < 1 {
            return bad("flute count must be ≥ 1".into());
        }
        if !(0.0..90.0).contains(&helix_angle_deg) {
            return bad(format!("helix angle must be in [0, 90), got {helix_angle_deg}"));
        }
        if !(flute_length > 0.0 && flute_length.is_finite()) {
            return bad(format!("flute length must be > 0, got {flute_length}"));
        }
        if !(disk_height > 0.0 && disk_height <= flute_length) {
            return bad(format!(
                "disk height must be in (0, flute length], got {disk_height}"
            ));
        }
        Ok(Tool {
            diameter,
            flute_count,
            helix_angle_deg,
            flute_length,
            disk_height,
        })
    }

    pub fn radius(&self) -> f64 {
        0.5 * self.diameter
    }

    /// Slices tiling `[0, flute_length]`; a remainder shorter than one disk
    /// height becomes a thinner top slice.
    pub fn slices(&self) -> Vec<DiskSlice> {
        let full = (self.flute_length / self.disk_height + 1e-9).floor() as usize;
        let mut out = Vec::with_capacity(full + 1);
        let k = 2.0 * self.helix_angle_deg.to_radians().tan() / self.diameter;
        for i in 0..full {
            let z_low = i as f64 * self.disk_height;
            let z_high = if i + 1 == full && (self.flute_length - (z_low + self.disk_height)).abs() < 1e-9 {
                self.flute_length
            } else {
                z_low + self.disk_height
            };
            out.push(DiskSlice {
                index: i,
                z_low,
                z_high,
                angular_offset: 0.5 * (z_low + z_high) * k,
            });
        }
        let top = out.last().map_or(0.0, |s| s.z_high);
        if self.flute_length - top > 1e-9 {
            out.push(DiskSlice {
                index: full,
                z_low: top,
                z_high: self.flute_length,
                angular_offset: 0.5 * (top + self.flute_length) * k,
            });
        }
        out
    }
}

/// Helix lag of the cutting edge across one disk height: 2·b·tan(helix)/D.
pub fn angular_resolution(tool: &Tool) -> f64 {
    2.0 * tool.disk_height * tool.helix_angle_deg.to_radians().tan() / tool.diameter
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_examples() {
        let t = Tool::new(10.0, 2, 0.0, 20.0, 0.1).unwrap();
        assert_eq!(angular_resolution(&t), 0.0);

        let t = Tool::new(10.0, 2, 19.3, 20.0, 0.1).unwrap();
        let r = angular_resolution(&t);
        assert!((r - 0.00700).abs() < 5e-5, "{r}");
        assert!((r.to_degrees() - 0.401).abs() < 1e-3);

        let half = Tool::new(10.0, 2, 19.3, 20.0, 0.05).unwrap();
        assert!((angular_resolution(&half) - 0.5 * r).abs() < 1e-15);
    }

    #[test]
    fn slices_tile_flute() {
        let t = Tool::new(10.0, 3, 30.0, 2.05, 0.1).unwrap();
        let s = t.slices();
        assert_eq!(s.len(), 21);
        assert_eq!(s[0].z_low, 0.0);
        for w in s.windows(2) {
            assert!((w[0].z_high - w[1].z_low).abs() < 1e-12);
        }
        assert!((s.last().unwrap().z_high - 2.05).abs() < 1e-12);
        assert!((s.last().unwrap().height() - 0.05).abs() < 1e-9);
        let k = 2.0 * 30f64.to_radians().tan() / 10.0;
        assert!((s[3].angular_offset - 0.35 * k).abs() < 1e-12);
    }

    #[test]
    fn exact_multiple_has_no_sliver() {
        let t = Tool::new(10.0, 2, 20.0, 20.0, 0.1).unwrap();
        let s = t.slices();
        assert_eq!(s.len(), 200);
        assert_eq!(s.last().unwrap().z_high, 20.0);
    }

    #[test]
    fn invalid_tools() {
        assert!(Tool::new(0.0, 2, 20.0, 20.0, 0.1).is_err());
        assert!(Tool::new(10.0, 0, 20.0, 20.0, 0.1).is_err());
        assert!(Tool::new(10.0, 2, 90.0, 20.0, 0.1).is_err());
        assert!(Tool::new(10.0, 2, 20.0, 20.0, 0.0).is_err());
        assert!(Tool::new(10.0, 2, 20.0, 1.0, 2.0).is_err());
    }
}
