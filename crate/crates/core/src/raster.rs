//! Z-buffered software rasterization of triangle meshes into per-view label
//! and depth planes.
//!
//! Sampling happens at pixel centres with an inclusive edge test and no
//! antialiasing. Depth is the camera-space z, interpolated perspective
//! correctly (`1/z` is affine in screen space). A triangle with any vertex at
//! `z <= NEAR_PLANE` is dropped whole. Both windings are drawn. Triangles are
//! processed in input order and the depth test is strict, so on exact ties the
//! earlier triangle wins.

use crate::geometry::Vec3;
use crate::io::camera::CameraParams;
use crate::io::mask::MaskImage;
use crate::mesh::TriMesh;

/// Camera-space depth (mm) below which a triangle is culled.
pub const NEAR_PLANE: f64 = 0.1;

pub const NO_TRIANGLE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Label {
    Empty = 0,
    Hand = 1,
    Object = 2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthBuffer {
    pub width: u32,
    pub height: u32,
    /// Camera-space z in mm, `+inf` where empty.
    pub depth: Vec<f64>,
    pub label: Vec<Label>,
    /// Index of the winning face within its own mesh.
    pub triangle: Vec<u32>,
}

impl DepthBuffer {
    pub fn new(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        DepthBuffer {
            width,
            height,
            depth: vec![f64::INFINITY; n],
            label: vec![Label::Empty; n],
            triangle: vec![NO_TRIANGLE; n],
        }
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        (y * self.width + x) as usize
    }

    pub fn count(&self, label: Label) -> usize {
        self.label.iter().filter(|&&l| l == label).count()
    }

    /// Label plane as a P5 image: 0 empty, 128 hand, 255 object.
    pub fn label_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.label.iter().map(|l| match l {
            Label::Empty => 0u8,
            Label::Hand => 128,
            Label::Object => 255,
        }));
        out
    }
}

/// Screen-space vertex: pixel coordinates and camera z. `z <= NEAR_PLANE`
/// marks a vertex that culls its triangles.
#[derive(Debug, Clone, Copy)]
pub struct ScreenVertex {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub fn project_vertices(vertices: &[Vec3], cam: &CameraParams, out: &mut Vec<ScreenVertex>) {
    out.clear();
    out.extend(vertices.iter().map(|v| {
        let pc = cam.to_camera(v);
        if pc.z <= NEAR_PLANE {
            return ScreenVertex {
                x: 0.0,
                y: 0.0,
                z: pc.z,
            };
        }
        let y = cam.k * pc;
        ScreenVertex {
            x: y.x / y.z,
            y: y.y / y.z,
            z: pc.z,
        }
    }));
}

/// Calls `emit(pixel_index, z, face_index)` for every pixel centre covered by
/// a visible triangle, in face order and row-major order within a face. With
/// `cull_back`, triangles whose outward side (counter-clockwise winding)
/// faces away from the camera are skipped.
#[inline]
pub fn scan_triangles<F>(verts: &[ScreenVertex], faces: &[[usize; 3]], width: u32, height: u32, cull_back: bool, mut emit: F)
where
    F: FnMut(usize, f64, u32),
{
    let (wf, hf) = (width as f64, height as f64);
    for (fi, f) in faces.iter().enumerate() {
        let a = verts[f[0]];
        let b = verts[f[1]];
        let c = verts[f[2]];
        if a.z <= NEAR_PLANE || b.z <= NEAR_PLANE || c.z <= NEAR_PLANE {
            continue;
        }
        let area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        if area == 0.0 || !area.is_finite() || (cull_back && area > 0.0) {
            continue;
        }
        let min_x = a.x.min(b.x).min(c.x);
        let max_x = a.x.max(b.x).max(c.x);
        let min_y = a.y.min(b.y).min(c.y);
        let max_y = a.y.max(b.y).max(c.y);
        if max_x < 0.5 || max_y < 0.5 || min_x > wf - 0.5 || min_y > hf - 0.5 {
            continue;
        }
        let x0 = ((min_x - 0.5).ceil().max(0.0)) as u32;
        let y0 = ((min_y - 0.5).ceil().max(0.0)) as u32;
        let x1 = ((max_x - 0.5).floor().min(wf - 1.0)) as i64;
        let y1 = ((max_y - 0.5).floor().min(hf - 1.0)) as i64;
        if x1 < x0 as i64 || y1 < y0 as i64 {
            continue;
        }
        let inv_area = 1.0 / area;
        let (iza, izb, izc) = (1.0 / a.z, 1.0 / b.z, 1.0 / c.z);
        for py in y0..=(y1 as u32) {
            let sy = py as f64 + 0.5;
            for px in x0..=(x1 as u32) {
                let sx = px as f64 + 0.5;
                let w0 = ((b.x - sx) * (c.y - sy) - (b.y - sy) * (c.x - sx)) * inv_area;
                let w1 = ((c.x - sx) * (a.y - sy) - (c.y - sy) * (a.x - sx)) * inv_area;
                let w2 = ((a.x - sx) * (b.y - sy) - (a.y - sy) * (b.x - sx)) * inv_area;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let z = 1.0 / (w0 * iza + w1 * izb + w2 * izc);
                emit((py * width + px) as usize, z, fi as u32);
            }
        }
    }
}

/// Renders labelled meshes into a fresh buffer sized like `cam`.
pub fn rasterize(meshes: &[(&TriMesh, Label)], cam: &CameraParams) -> DepthBuffer {
    let mut buf = DepthBuffer::new(cam.width, cam.height);
    let mut scratch = Vec::new();
    for (mesh, label) in meshes {
        draw_mesh(&mut buf, mesh, *label, cam, &mut scratch);
    }
    buf
}

/// Draws one mesh on top of an existing buffer.
pub fn draw_mesh(buf: &mut DepthBuffer, mesh: &TriMesh, label: Label, cam: &CameraParams, scratch: &mut Vec<ScreenVertex>) {
    debug_assert_eq!((buf.width, buf.height), (cam.width, cam.height));
    project_vertices(&mesh.vertices, cam, scratch);
    let DepthBuffer {
        width,
        height,
        depth,
        label: labels,
        triangle,
    } = buf;
    scan_triangles(scratch, &mesh.faces, *width, *height, false, |i, z, fi| {
        if z < depth[i] {
            depth[i] = z;
            labels[i] = label;
            triangle[i] = fi;
        }
    });
}

/// Min-depth rendering of a single mesh into `depth` (no labels).
pub fn draw_depth(depth: &mut [f64], mesh_vertices: &[Vec3], faces: &[[usize; 3]], cam: &CameraParams, scratch: &mut Vec<ScreenVertex>) {
    draw_depth_culled(depth, mesh_vertices, faces, cam, false, scratch);
}

/// [`draw_depth`] drawing only camera-facing triangles. For a closed mesh
/// with outward winding and the camera outside it, this gives the same depth
/// at about half the cost.
pub fn draw_front_depth(depth: &mut [f64], mesh_vertices: &[Vec3], faces: &[[usize; 3]], cam: &CameraParams, scratch: &mut Vec<ScreenVertex>) {
    draw_depth_culled(depth, mesh_vertices, faces, cam, true, scratch);
}

fn draw_depth_culled(depth: &mut [f64], mesh_vertices: &[Vec3], faces: &[[usize; 3]], cam: &CameraParams, cull_back: bool, scratch: &mut Vec<ScreenVertex>) {
    project_vertices(mesh_vertices, cam, scratch);
    scan_triangles(scratch, faces, cam.width, cam.height, cull_back, |i, z, _| {
        if z < depth[i] {
            depth[i] = z;
        }
    });
}

/// Object pixels not hidden by the hand.
pub fn object_visible_mask(buf: &DepthBuffer, view: usize) -> MaskImage {
    MaskImage {
        view,
        width: buf.width,
        height: buf.height,
        pixels: buf
            .label
            .iter()
            .map(|&l| if l == Label::Object { 255 } else { 0 })
            .collect(),
    }
}

/// Foreground pixels with at least one background 4-neighbour; outside the
/// image counts as background. Row-major order.
pub fn mask_boundary(mask: &MaskImage) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for y in 0..mask.height {
        for x in 0..mask.width {
            if !mask.get(x, y) {
                continue;
            }
            let (xi, yi) = (x as i64, y as i64);
            let edge = !mask.get_signed(xi - 1, yi)
                || !mask.get_signed(xi + 1, yi)
                || !mask.get_signed(xi, yi - 1)
                || !mask.get_signed(xi, yi + 1);
            if edge {
                out.push((x, y));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Mat3;

    fn cam(w: u32, h: u32, f: f64) -> CameraParams {
        CameraParams {
            id: 0,
            k: Mat3::new(f, 0.0, w as f64 / 2.0, 0.0, f, h as f64 / 2.0, 0.0, 0.0, 1.0),
            r: Mat3::identity(),
            t: Vec3::zeros(),
            width: w,
            height: h,
        }
    }

    fn tri(z: f64, s: f64) -> TriMesh {
        TriMesh::new(
            vec![
                Vec3::new(-s, -s, z),
                Vec3::new(s, -s, z),
                Vec3::new(0.0, s, z),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn big_triangle_covers_centres() {
        let c = cam(64, 48, 100.0);
        let t = TriMesh::new(
            vec![
                Vec3::new(-1000.0, -1000.0, 10.0),
                Vec3::new(1000.0, -1000.0, 10.0),
                Vec3::new(0.0, 1000.0, 10.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let buf = rasterize(&[(&t, Label::Object)], &c);
        assert_eq!(buf.count(Label::Object), 64 * 48);
        assert!(buf.depth.iter().all(|&z| (z - 10.0).abs() < 1e-9));
    }

    #[test]
    fn hand_in_front_occludes_object() {
        let c = cam(64, 48, 100.0);
        let obj = tri(500.0, 200.0);
        let hand = tri(400.0, 160.0);
        let buf = rasterize(&[(&hand, Label::Hand), (&obj, Label::Object)], &c);
        let swapped = rasterize(&[(&obj, Label::Object), (&hand, Label::Hand)], &c);
        assert_eq!(buf.label, swapped.label);
        // The footprints coincide, so the hand hides the object entirely.
        assert_eq!(buf.count(Label::Object), 0);
        assert!(buf.count(Label::Hand) > 0);
        assert_eq!(object_visible_mask(&buf, 0).count(), 0);
    }

    #[test]
    fn empty_buffer_gives_empty_mask() {
        let buf = DepthBuffer::new(8, 8);
        assert_eq!(object_visible_mask(&buf, 0).count(), 0);
    }

    #[test]
    fn triangle_behind_camera_culled() {
        let c = cam(32, 32, 50.0);
        let t = TriMesh::new(
            vec![
                Vec3::new(-10.0, -10.0, 0.05),
                Vec3::new(10.0, -10.0, 50.0),
                Vec3::new(0.0, 10.0, 50.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert_eq!(rasterize(&[(&t, Label::Object)], &c).count(Label::Object), 0);
    }

    #[test]
    fn boundary_of_block() {
        let m = MaskImage::from_fn(0, 20, 20, |x, y| (5..8).contains(&x) && (5..8).contains(&y));
        assert_eq!(mask_boundary(&m).len(), 8);
        assert!(mask_boundary(&MaskImage::new(0, 5, 5)).is_empty());
        let full = MaskImage::from_fn(0, 3, 3, |_, _| true);
        assert_eq!(mask_boundary(&full).len(), 8);
    }

    #[test]
    fn disk_boundary_near_perimeter() {
        let m = MaskImage::from_fn(0, 200, 200, |x, y| {
            let dx = x as f64 + 0.5 - 100.0;
            let dy = y as f64 + 0.5 - 100.0;
            dx * dx + dy * dy <= 2500.0
        });
        // A digital circle has one boundary pixel per unit step along its
        // dominant axis: perimeter times the mean of max(|cos|, |sin|).
        let n = mask_boundary(&m).len() as f64;
        let p = 2.0 * std::f64::consts::PI * 50.0 * (2.0 * 2f64.sqrt() / std::f64::consts::PI);
        assert!((n - p).abs() / p < 0.05, "{n} vs {p}");
    }

    #[test]
    fn icosphere_area_matches_projected_disk() {
        let c = cam(640, 480, 800.0);
        let (r, z) = (100.0, 1000.0);
        let s = TriMesh::icosphere(4, r).transformed(&Mat3::identity(), &Vec3::new(0.0, 0.0, z));
        let buf = rasterize(&[(&s, Label::Object)], &c);
        let n = buf.count(Label::Object) as f64;
        // Exact silhouette of a sphere is the projection of its tangent cone:
        // radius f * r / sqrt(z^2 - r^2). The pi (f r / z)^2 approximation
        // differs by 1% at this geometry, so compare against both loosely.
        let disk = std::f64::consts::PI * (800.0 * r / z).powi(2);
        assert!((n - disk).abs() / disk < 0.02, "{n} vs {disk}");
        let cone = std::f64::consts::PI * (800.0 * r).powi(2) / (z * z - r * r);
        assert!((n - cone).abs() / cone < 0.01, "{n} vs {cone}");
    }

    #[test]
    fn rendering_is_deterministic_and_order_invariant() {
        let c = cam(64, 48, 60.0);
        let s = TriMesh::icosphere(2, 30.0).transformed(&Mat3::identity(), &Vec3::new(3.0, -2.0, 150.0));
        let a = rasterize(&[(&s, Label::Object)], &c);
        let b = rasterize(&[(&s, Label::Object)], &c);
        assert_eq!(a, b);
        let mut rev = s.clone();
        rev.faces.reverse();
        let r = rasterize(&[(&rev, Label::Object)], &c);
        assert_eq!(object_visible_mask(&a, 0), object_visible_mask(&r, 0));
    }

    #[test]
    fn front_faces_give_the_same_depth_for_closed_meshes() {
        let c = cam(160, 120, 150.0);
        let mut scratch = Vec::new();
        for (k, m) in [TriMesh::icosphere(3, 40.0), TriMesh::cuboid(&Vec3::new(-30.0, -20.0, -10.0), &Vec3::new(25.0, 30.0, 20.0))]
            .iter()
            .enumerate()
        {
            assert!(m.signed_volume() > 0.0);
            let r = crate::geometry::rotation_from_axis_angle(&Vec3::new(0.3, -0.5, 0.2 * k as f64));
            let m = m.transformed(&r, &Vec3::new(5.0, -3.0, 200.0));
            let mut all = vec![f64::INFINITY; 160 * 120];
            let mut front = all.clone();
            draw_depth(&mut all, &m.vertices, &m.faces, &c, &mut scratch);
            draw_front_depth(&mut front, &m.vertices, &m.faces, &c, &mut scratch);
            let covered = all.iter().filter(|d| d.is_finite()).count();
            assert!(covered > 500);
            let differ = all.iter().zip(&front).filter(|(a, b)| (*a - *b).abs() > 1e-9).count();
            assert!(differ * 1000 <= covered, "{differ} of {covered}");
        }
    }
}
