//! Workpiece mass and center-of-mass tracking along milling tool paths.
//!
//! A dexel board simulates the in-process stock, per-slice engagement angles
//! drive a geometric removed-area model, and the running mass and center of
//! mass are written to a lookup table. A voxel carver provides an
//! independent reference for validation.

pub mod config;
pub mod dexel;
pub mod engagement;
pub mod error;
pub mod geometry;
pub mod mass;
pub mod oracle;
pub mod scenario;
pub mod simulate;
pub mod tool;
pub mod toolpath;

pub use error::{Error, Result};
