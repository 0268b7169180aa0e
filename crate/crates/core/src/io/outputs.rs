//! Per-frame stage outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Contents of `pose_<frame>.json`. Stages fill in the fields they own.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FramePose {
    pub frame: usize,
    /// Smoothed hand parameters: root rotation, root translation, then three
    /// per articulated joint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand_theta: Option<Vec<f64>>,
    /// Unsmoothed solver output, kept so a resumed run can warm-start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand_theta_raw: Option<Vec<f64>>,
    /// Smoothed object pose: axis-angle rotation then translation (mm).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_alpha: Option<[f64; 6]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_alpha_raw: Option<[f64; 6]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_loss: Option<f64>,
}

pub fn pose_path(dir: &Path, frame: usize) -> PathBuf {
    dir.join(format!("pose_{frame}.json"))
}

pub fn object_mesh_path(dir: &Path, frame: usize) -> PathBuf {
    dir.join(format!("object_{frame}.obj"))
}

pub fn hand_mesh_path(dir: &Path, frame: usize) -> PathBuf {
    dir.join(format!("hand_{frame}.obj"))
}

pub fn trace_path(dir: &Path, frame: usize) -> PathBuf {
    dir.join(format!("trace_{frame}.csv"))
}

pub fn contact_map_path(dir: &Path, frame: usize) -> PathBuf {
    dir.join(format!("contactmap_{frame}.csv"))
}

pub fn save_pose(path: &Path, pose: &FramePose) -> Result<()> {
    super::write_json(path, pose)
}

pub fn load_pose(path: &Path) -> Result<FramePose> {
    super::read_json(path)
}

/// Writes `vertex_index,displacement_mm` rows.
pub fn save_contact_map(path: &Path, values: &[f64]) -> Result<()> {
    let mut s = String::from("vertex_index,displacement_mm\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(s, "{i},{v}");
    }
    super::write_bytes(path, s.as_bytes())
}

pub fn load_contact_map(path: &Path) -> Result<Vec<f64>> {
    let text = super::read_string(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if n == 0 && line.starts_with("vertex_index") {
            continue;
        }
        let mut it = line.split(',');
        let idx: usize = it
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::parse(path, format!("bad row {}", n + 1)))?;
        let val: f64 = it
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::parse(path, format!("bad row {}", n + 1)))?;
        if idx != out.len() {
            return Err(Error::parse(path, format!("non-contiguous vertex index at row {}", n + 1)));
        }
        out.push(val);
    }
    Ok(out)
}
