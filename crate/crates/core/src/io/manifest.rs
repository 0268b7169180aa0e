//! Sequence manifest: the index of every input file of a capture.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFiles {
    pub index: usize,
    pub keypoints: PathBuf,
    /// One mask per camera, ordered like the camera file.
    pub masks: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub frame_count: usize,
    pub fps: f64,
    pub cameras: PathBuf,
    pub hand_model: PathBuf,
    pub object_template: PathBuf,
    pub frames: Vec<FrameFiles>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    /// Directory relative paths are resolved against; set on load.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl SequenceManifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Checks frame numbering and the presence of the shared inputs. Per-frame
    /// files are checked by the stage that reads them so that a missing file
    /// is reported with its frame and stage.
    pub fn validate(&self) -> Result<()> {
        if self.frame_count != self.frames.len() {
            return Err(Error::InvalidInput(format!(
                "manifest declares {} frames but lists {}",
                self.frame_count,
                self.frames.len()
            )));
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.index != i {
                return Err(Error::InvalidInput(format!(
                    "frame indices must be contiguous from 0: entry {i} has index {}",
                    f.index
                )));
            }
        }
        if !(self.fps > 0.0) {
            return Err(Error::InvalidInput("fps must be positive".into()));
        }
        for p in [&self.cameras, &self.hand_model, &self.object_template] {
            let full = self.resolve(p);
            if !full.is_file() {
                return Err(Error::InvalidInput(format!("missing input file {}", full.display())));
            }
        }
        Ok(())
    }

    /// Every referenced file, including per-frame inputs.
    pub fn missing_files(&self) -> Vec<PathBuf> {
        let mut all = vec![&self.cameras, &self.hand_model, &self.object_template];
        for f in &self.frames {
            all.push(&f.keypoints);
            all.extend(f.masks.iter());
        }
        all.into_iter()
            .map(|p| self.resolve(p))
            .filter(|p| !p.is_file())
            .collect()
    }
}

pub fn load_manifest(path: &Path) -> Result<SequenceManifest> {
    let mut m: SequenceManifest = super::read_json(path)?;
    m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    m.validate()?;
    Ok(m)
}

pub fn save_manifest(path: &Path, m: &SequenceManifest) -> Result<()> {
    super::write_json(path, m)
}
