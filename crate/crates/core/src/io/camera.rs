use std::path::Path;

use nalgebra::Matrix2x3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mat3, Vec2, Vec3};

/// Pinhole camera with world-to-camera extrinsics. Pixel `(x, y)` covers the
/// continuous square `[x, x+1) x [y, y+1)`; its centre is at `(x+0.5, y+0.5)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraParams {
    pub id: usize,
    pub k: Mat3,
    pub r: Mat3,
    pub t: Vec3,
    pub width: u32,
    pub height: u32,
}

#[derive(Serialize, Deserialize)]
struct CameraRecord {
    id: i64,
    #[serde(rename = "K")]
    k: [f64; 9],
    #[serde(rename = "R")]
    r: [f64; 9],
    #[serde(rename = "T")]
    t: [f64; 3],
    width: i64,
    height: i64,
}

fn row_major(m: &Mat3) -> [f64; 9] {
    let mut out = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            out[i * 3 + j] = m[(i, j)];
        }
    }
    out
}

fn from_row_major(a: &[f64; 9]) -> Mat3 {
    Mat3::from_row_slice(a)
}

const ROTATION_TOL: f64 = 1e-6;

impl CameraParams {
    pub fn validate(&self) -> Result<()> {
        let view = self.id as i64;
        let bad = |field: &'static str, msg: String| Error::InvalidCamera { view, field, msg };
        let all_finite = self.k.iter().chain(self.r.iter()).chain(self.t.iter()).all(|x| x.is_finite());
        if !all_finite {
            return Err(bad("K/R/T", "non-finite entry".into()));
        }
        let orth = (self.r.transpose() * self.r - Mat3::identity()).abs().max();
        if orth > ROTATION_TOL {
            return Err(bad("R", format!("rotation not orthonormal (deviation {orth:.3e})")));
        }
        let det = self.r.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(bad("R", format!("rotation not proper (det {det:.6})")));
        }
        let k = &self.k;
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 {
            return Err(bad("K", "intrinsics not upper-triangular".into()));
        }
        if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0) {
            return Err(bad("K", "focal lengths must be positive".into()));
        }
        if k[(2, 2)] <= 0.0 {
            return Err(bad("K", "K[2][2] must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(bad("width/height", "image size must be positive".into()));
        }
        Ok(())
    }

    /// World point in camera coordinates.
    #[inline]
    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.r * p + self.t
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.r.transpose() * self.t)
    }

    /// Projects a camera-space point; `None` behind the image plane.
    #[inline]
    pub fn project_camera_point(&self, pc: &Vec3) -> Option<Vec2> {
        if pc.z <= 0.0 {
            return None;
        }
        let y = self.k * pc;
        Some(Vec2::new(y.x / y.z, y.y / y.z))
    }

    /// Full pinhole projection `pi(K (R p + T))`.
    #[inline]
    pub fn project(&self, p: &Vec3) -> Option<Vec2> {
        self.project_camera_point(&self.to_camera(p))
    }

    /// Projection and its 2x3 Jacobian with respect to the world point.
    pub fn project_with_jacobian(&self, p: &Vec3) -> Option<(Vec2, Matrix2x3<f64>)> {
        let pc = self.to_camera(p);
        if pc.z <= 0.0 {
            return None;
        }
        let y = self.k * pc;
        let iz = 1.0 / y.z;
        let dpi = Matrix2x3::new(iz, 0.0, -y.x * iz * iz, 0.0, iz, -y.y * iz * iz);
        Some((Vec2::new(y.x * iz, y.y * iz), dpi * self.k * self.r))
    }

    /// World-space unit direction of the ray through image point `uv`.
    pub fn ray_direction(&self, uv: &Vec2) -> Vec3 {
        let kinv = self.k.try_inverse().unwrap_or_else(Mat3::identity);
        let dc = kinv * Vec3::new(uv.x, uv.y, 1.0);
        (self.r.transpose() * dc).normalize()
    }

    /// The same camera at a different image resolution (`scale` < 1 shrinks).
    pub fn scaled(&self, scale: f64) -> CameraParams {
        let s = Mat3::new(scale, 0.0, 0.0, 0.0, scale, 0.0, 0.0, 0.0, 1.0);
        CameraParams {
            id: self.id,
            k: s * self.k,
            r: self.r,
            t: self.t,
            width: ((self.width as f64 * scale).round() as u32).max(1),
            height: ((self.height as f64 * scale).round() as u32).max(1),
        }
    }

    /// Mean focal length in pixels.
    pub fn focal(&self) -> f64 {
        0.5 * (self.k[(0, 0)] + self.k[(1, 1)])
    }
}

pub fn parse_cameras(text: &str, path: &Path) -> Result<Vec<CameraParams>> {
    let recs: Vec<CameraRecord> = serde_json::from_str(text).map_err(|e| Error::parse(path, e))?;
    let mut out = Vec::with_capacity(recs.len());
    for rec in recs {
        let bad = |field: &'static str, msg: &str| Error::InvalidCamera {
            view: rec.id,
            field,
            msg: msg.to_string(),
        };
        if rec.id < 0 {
            return Err(bad("id", "negative view id"));
        }
        if rec.width <= 0 || rec.height <= 0 || rec.width > u32::MAX as i64 || rec.height > u32::MAX as i64 {
            return Err(bad("width/height", "image size must be positive"));
        }
        let cam = CameraParams {
            id: rec.id as usize,
            k: from_row_major(&rec.k),
            r: from_row_major(&rec.r),
            t: Vec3::from(rec.t),
            width: rec.width as u32,
            height: rec.height as u32,
        };
        cam.validate()?;
        out.push(cam);
    }
    let mut ids: Vec<usize> = out.iter().map(|c| c.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::parse(path, "duplicate camera id"));
    }
    Ok(out)
}

/// Reads `cameras.json` and validates every entry.
pub fn load_cameras(path: &Path) -> Result<Vec<CameraParams>> {
    let text = super::read_string(path)?;
    parse_cameras(&text, path)
}

pub fn save_cameras(path: &Path, cams: &[CameraParams]) -> Result<()> {
    let recs: Vec<CameraRecord> = cams
        .iter()
        .map(|c| CameraRecord {
            id: c.id as i64,
            k: row_major(&c.k),
            r: row_major(&c.r),
            t: [c.t.x, c.t.y, c.t.z],
            width: c.width as i64,
            height: c.height as i64,
        })
        .collect();
    super::write_json(path, &recs)
}
