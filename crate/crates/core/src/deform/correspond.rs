//! Matching rendered object contours to observed mask contours.

use std::collections::BTreeMap;

use crate::geometry::{Vec2, Vec3};
use crate::io::camera::CameraParams;
use crate::io::mask::MaskImage;
use crate::mesh::TriMesh;
use crate::par;
use crate::raster::{mask_boundary, object_visible_mask, rasterize, DepthBuffer, Label, NO_TRIANGLE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SilhouetteCorrespondence {
    pub vertex: usize,
    /// Camera id.
    pub view: usize,
    /// Target image position of the vertex, px.
    pub target: Vec2,
}

/// Outward 2D normal of a mask at a pixel from a Sobel gradient (the mask
/// decreases outward); zero in flat regions.
fn outward_normal(mask: &MaskImage, x: u32, y: u32) -> Vec2 {
    let v = |dx: i64, dy: i64| if mask.get_signed(x as i64 + dx, y as i64 + dy) { 1.0 } else { 0.0 };
    let gx = (v(1, -1) + 2.0 * v(1, 0) + v(1, 1)) - (v(-1, -1) + 2.0 * v(-1, 0) + v(-1, 1));
    let gy = (v(-1, 1) + 2.0 * v(0, 1) + v(1, 1)) - (v(-1, -1) + 2.0 * v(0, -1) + v(1, -1));
    -Vec2::new(gx, gy)
}

/// Observed contour pixels bucketed on a coarse grid for radius queries.
struct ContourIndex {
    cell: f64,
    buckets: BTreeMap<(i64, i64), Vec<(u32, u32)>>,
}

impl ContourIndex {
    fn new(points: &[(u32, u32)], cell: f64) -> Self {
        let mut buckets: BTreeMap<(i64, i64), Vec<(u32, u32)>> = BTreeMap::new();
        for &(x, y) in points {
            buckets
                .entry(((x as f64 / cell) as i64, (y as f64 / cell) as i64))
                .or_default()
                .push((x, y));
        }
        ContourIndex { cell, buckets }
    }

    /// Candidates within `radius` sorted by distance, then row-major.
    fn within(&self, x: u32, y: u32, radius: f64) -> Vec<(f64, (u32, u32))> {
        let r = (radius / self.cell).ceil() as i64;
        let (cx, cy) = ((x as f64 / self.cell) as i64, (y as f64 / self.cell) as i64);
        let mut out = Vec::new();
        for by in cy - r..=cy + r {
            for bx in cx - r..=cx + r {
                if let Some(pts) = self.buckets.get(&(bx, by)) {
                    for &(px, py) in pts {
                        let d = ((px as f64 - x as f64).powi(2) + (py as f64 - y as f64).powi(2)).sqrt();
                        if d <= radius {
                            out.push((d, (px, py)));
                        }
                    }
                }
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1 .1, a.1 .0).cmp(&(b.1 .1, b.1 .0))));
        out
    }
}

/// Correspondences in one view; `buf` is the rendering of hand and object.
fn view_correspondences(
    object: &TriMesh,
    buf: &DepthBuffer,
    observed: &MaskImage,
    cam: &CameraParams,
    gating_radius: f64,
) -> Vec<SilhouetteCorrespondence> {
    let rendered = object_visible_mask(buf, cam.id);
    let contour = mask_boundary(observed);
    if contour.is_empty() {
        return Vec::new();
    }
    let index = ContourIndex::new(&contour, gating_radius.max(1.0));
    let near_hand = |x: u32, y: u32| {
        (-1i64..=1).any(|dy| {
            (-1i64..=1).any(|dx| {
                let (px, py) = (x as i64 + dx, y as i64 + dy);
                px >= 0
                    && py >= 0
                    && (px as u32) < buf.width
                    && (py as u32) < buf.height
                    && buf.label[buf.index(px as u32, py as u32)] == Label::Hand
            })
        })
    };
    // (vertex) -> (sum of targets, count)
    let mut acc: BTreeMap<usize, (Vec2, usize)> = BTreeMap::new();
    for (x, y) in mask_boundary(&rendered) {
        let tri = buf.triangle[buf.index(x, y)];
        if tri == NO_TRIANGLE || near_hand(x, y) {
            continue;
        }
        let pixel = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
        let face = object.faces[tri as usize];
        let mut best: Option<(f64, usize, Vec2)> = None;
        for &v in &face {
            if let Some(p) = cam.project(&object.vertices[v]) {
                let d = (p - pixel).norm_squared();
                if best.is_none_or(|b| d < b.0) {
                    best = Some((d, v, p));
                }
            }
        }
        let Some((_, vertex, projected)) = best else { continue };
        let n_r = outward_normal(&rendered, x, y);
        let matched = index
            .within(x, y, gating_radius)
            .into_iter()
            .find(|&(_, (cx, cy))| n_r.dot(&outward_normal(observed, cx, cy)) > 0.0);
        if let Some((_, (cx, cy))) = matched {
            let shift = Vec2::new(cx as f64 - x as f64, cy as f64 - y as f64);
            let e = acc.entry(vertex).or_insert((Vec2::zeros(), 0));
            e.0 += projected + shift;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(vertex, (sum, n))| SilhouetteCorrespondence {
            vertex,
            view: cam.id,
            target: sum / n as f64,
        })
        .collect()
}

/// For every view with an observed mask: renders hand and object, walks the
/// object's silhouette boundary (skipping pixels next to the hand, which
/// bound an occlusion rather than the object), maps each boundary pixel to
/// the nearest-projecting vertex of its triangle and pairs it with the
/// nearest observed contour pixel within the gating radius whose outward
/// direction agrees. The target is the vertex projection shifted by the
/// pixel offset; several pixels of one vertex are averaged.
pub fn find_silhouette_correspondences(
    object: &TriMesh,
    hand: Option<&TriMesh>,
    masks: &[MaskImage],
    cams: &[CameraParams],
    gating_radius: f64,
) -> Vec<SilhouetteCorrespondence> {
    let per_view = par::map_slice(cams, |cam| {
        let Some(observed) = masks.iter().find(|m| m.view == cam.id) else {
            return Vec::new();
        };
        if observed.width != cam.width || observed.height != cam.height {
            return Vec::new();
        }
        let mut meshes = Vec::new();
        if let Some(h) = hand {
            meshes.push((h, Label::Hand));
        }
        meshes.push((object, Label::Object));
        let buf = rasterize(&meshes, cam);
        view_correspondences(object, &buf, observed, cam, gating_radius)
    });
    per_view.into_iter().flatten().collect()
}

/// Mean pixel distance between each correspondence target and its vertex
/// projection.
pub fn mean_offset(object_vertices: &[Vec3], corr: &[SilhouetteCorrespondence], cams: &[CameraParams]) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for c in corr {
        if let Some(cam) = cams.iter().find(|k| k.id == c.view) {
            if let Some(p) = cam.project(&object_vertices[c.vertex]) {
                total += (p - c.target).norm();
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}
