//! JSON run configuration. Unknown keys are rejected and errors carry the
//! JSON path of the offending value.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engagement::MillingMode;
use crate::error::{Error, Result};
use crate::geometry::{tilt_transform, Frame, Vec3};
use crate::oracle::DEFAULT_CELL_CAP;
use crate::simulate::SimConfig;
use crate::tool::Tool;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolConfig {
    pub diameter_mm: f64,
    pub flute_count: u32,
    pub helix_deg: f64,
    pub flute_length_mm: f64,
}

impl Default for ToolConfig {
    fn default() -> Self {
        ToolConfig {
            diameter_mm: 10.0,
            flute_count: 2,
            helix_deg: 20.0,
            flute_length_mm: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkpieceConfig {
    pub box_mm: [f64; 3],
    pub origin_mm: [f64; 3],
    pub tilt_deg: f64,
    pub tilt_axis: [f64; 3],
}

impl Default for WorkpieceConfig {
    fn default() -> Self {
        WorkpieceConfig {
            box_mm: [60.0, 60.0, 20.0],
            origin_mm: [0.0; 3],
            tilt_deg: 0.0,
            tilt_axis: [1.0, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolutionConfig {
    pub path_step_mm: f64,
    pub disk_height_mm: f64,
    pub dphi_deg: f64,
    pub grid_mm: f64,
    pub voxel_mm: f64,
}

impl Default for ResolutionConfig {
    fn default() -> Self {
        ResolutionConfig {
            path_step_mm: 0.5,
            disk_height_mm: 0.1,
            dphi_deg: 0.4,
            grid_mm: 0.1,
            voxel_mm: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub cell_cap: u64,
    /// Carve the path as loaded instead of the resampled one.
    pub raw_path: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            cell_cap: DEFAULT_CELL_CAP,
            raw_path: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub table: Option<PathBuf>,
    pub removals: Option<PathBuf>,
    pub oracle: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub tool: ToolConfig,
    pub workpiece: WorkpieceConfig,
    pub density_g_mm3: f64,
    pub resolution: ResolutionConfig,
    pub milling_mode: MillingMode,
    pub oracle: OracleConfig,
    pub output: OutputConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            tool: ToolConfig::default(),
            workpiece: WorkpieceConfig::default(),
            density_g_mm3: 2.81e-3,
            resolution: ResolutionConfig::default(),
            milling_mode: MillingMode::Down,
            oracle: OracleConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: format!("{origin}: {}", e.path()),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: String| {
            Err(Error::Config {
                path: path.into(),
                message,
            })
        };
        let r = &self.resolution;
        for (name, v) in [
            ("resolution.path_step_mm", r.path_step_mm),
            ("resolution.disk_height_mm", r.disk_height_mm),
            ("resolution.dphi_deg", r.dphi_deg),
            ("resolution.grid_mm", r.grid_mm),
            ("resolution.voxel_mm", r.voxel_mm),
            ("density_g_mm3", self.density_g_mm3),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, format!("must be > 0, got {v}"));
            }
        }
        if r.dphi_deg > 0.5 {
            return bad("resolution.dphi_deg", format!("must be ≤ 0.5, got {}", r.dphi_deg));
        }
        let w = &self.workpiece;
        if !(0.0..=45.0).contains(&w.tilt_deg) {
            return bad("workpiece.tilt_deg", format!("must be in [0, 45], got {}", w.tilt_deg));
        }
        if w.box_mm.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return bad("workpiece.box_mm", format!("dimensions must be > 0, got {:?}", w.box_mm));
        }
        if Vec3::from_array(w.tilt_axis).norm() < 1e-9 {
            return bad("workpiece.tilt_axis", "must be nonzero".into());
        }
        self.tool().map(|_| ())
    }

    pub fn tool(&self) -> Result<Tool> {
        Tool::new(
            self.tool.diameter_mm,
            self.tool.flute_count,
            self.tool.helix_deg,
            self.tool.flute_length_mm,
            self.resolution.disk_height_mm,
        )
    }

    pub fn box_dims(&self) -> Vec3 {
        Vec3::from_array(self.workpiece.box_mm)
    }

    pub fn frame(&self) -> Frame {
        let axis = Vec3::from_array(self.workpiece.tilt_axis);
        tilt_transform(self.workpiece.tilt_deg, axis * (1.0 / axis.norm()))
            .with_origin(Vec3::from_array(self.workpiece.origin_mm))
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            path_step: self.resolution.path_step_mm,
            dphi: self.resolution.dphi_deg.to_radians(),
            mode: self.milling_mode,
            reach: None,
        }
    }
}
