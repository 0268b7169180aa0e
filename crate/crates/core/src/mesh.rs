//! Indexed triangle meshes and the primitive generators used by the
//! synthetic fixtures.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Mat3, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    /// Area-weighted vertex normals, unit length.
    pub normals: Vec<Vec3>,
}

impl TriMesh {
    /// Builds a mesh, checking face indices and computing normals.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} references vertex {bad}, mesh has {n} vertices"
                )));
            }
        }
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
        }
        let mut m = TriMesh {
            vertices,
            faces,
            normals: Vec::new(),
        };
        m.recompute_normals();
        Ok(m)
    }

    /// Mesh with the same topology and new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> TriMesh {
        assert_eq!(vertices.len(), self.vertices.len());
        let mut m = TriMesh {
            vertices,
            faces: self.faces.clone(),
            normals: Vec::new(),
        };
        m.recompute_normals();
        m
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn recompute_normals(&mut self) {
        let mut acc = vec![Vec3::zeros(); self.vertices.len()];
        for f in &self.faces {
            let n = self.face_cross(f);
            for &i in f {
                acc[i] += n;
            }
        }
        self.normals = acc
            .into_iter()
            .map(|n| {
                let len = n.norm();
                if len > 0.0 {
                    n / len
                } else {
                    Vec3::z()
                }
            })
            .collect();
    }

    fn face_cross(&self, f: &[usize; 3]) -> Vec3 {
        let [a, b, c] = f.map(|i| self.vertices[i]);
        (b - a).cross(&(c - a))
    }

    pub fn face_normal(&self, fi: usize) -> Vec3 {
        let n = self.face_cross(&self.faces[fi]);
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vec3::zeros()
        }
    }

    pub fn triangle(&self, fi: usize) -> [Vec3; 3] {
        self.faces[fi].map(|i| self.vertices[i])
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    pub fn centroid(&self) -> Vec3 {
        self.vertices.iter().sum::<Vec3>() / self.vertices.len().max(1) as f64
    }

    /// Undirected edges with the number of faces using each.
    pub fn edge_counts(&self) -> HashMap<(usize, usize), u32> {
        let mut m = HashMap::with_capacity(self.faces.len() * 3 / 2);
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *m.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        m
    }

    /// Undirected edges, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<_> = self.edge_counts().into_keys().collect();
        e.sort_unstable();
        e
    }

    /// Errors with the offending edges unless every edge is shared by exactly
    /// two faces.
    pub fn check_watertight(&self) -> Result<()> {
        if self.faces.is_empty() {
            return Err(Error::InvalidMesh("mesh has no faces".into()));
        }
        let mut bad: Vec<(usize, usize)> = self
            .edge_counts()
            .into_iter()
            .filter(|&(_, c)| c != 2)
            .map(|(e, _)| e)
            .collect();
        if bad.is_empty() {
            return Ok(());
        }
        bad.sort_unstable();
        Err(Error::NotWatertight {
            count: bad.len(),
            examples: bad.into_iter().take(8).collect(),
        })
    }

    /// V - E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_counts().len() as i64 + self.faces.len() as i64
    }

    /// Watertight with Euler characteristic 2.
    pub fn check_closed_genus0(&self) -> Result<()> {
        self.check_watertight()?;
        let chi = self.euler_characteristic();
        if chi != 2 {
            return Err(Error::InvalidMesh(format!(
                "expected genus 0 (Euler characteristic 2), got {chi}"
            )));
        }
        Ok(())
    }

    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| self.vertices[i]);
                a.dot(&b.cross(&c))
            })
            .sum::<f64>()
            / 6.0
    }

    /// Sorted, deduplicated one-ring neighbours of each vertex.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                nb[a].push(b);
                nb[b].push(a);
            }
        }
        for l in &mut nb {
            l.sort_unstable();
            l.dedup();
        }
        nb
    }

    /// Applies `x -> R x + t` to positions and `n -> R n` to normals.
    pub fn transformed(&self, r: &Mat3, t: &Vec3) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| r * v + t).collect(),
            faces: self.faces.clone(),
            normals: self.normals.iter().map(|n| r * n).collect(),
        }
    }

    /// Concatenates meshes into one (disjoint components).
    pub fn merged(parts: &[TriMesh]) -> TriMesh {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        let mut normals = Vec::new();
        for p in parts {
            let off = vertices.len();
            vertices.extend_from_slice(&p.vertices);
            normals.extend_from_slice(&p.normals);
            faces.extend(p.faces.iter().map(|f| f.map(|i| i + off)));
        }
        let mut m = TriMesh {
            vertices,
            faces,
            normals,
        };
        m.recompute_normals();
        m
    }

    fn orient_outward(mut self) -> TriMesh {
        if self.signed_volume() < 0.0 {
            for f in &mut self.faces {
                f.swap(1, 2);
            }
            self.recompute_normals();
        }
        self
    }

    /// Subdivided icosahedron projected onto a sphere; `10 * 4^level + 2`
    /// vertices.
    pub fn icosphere(level: u32, radius: f64) -> TriMesh {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<Vec3> = [
            (-1.0, t, 0.0),
            (1.0, t, 0.0),
            (-1.0, -t, 0.0),
            (1.0, -t, 0.0),
            (0.0, -1.0, t),
            (0.0, 1.0, t),
            (0.0, -1.0, -t),
            (0.0, 1.0, -t),
            (t, 0.0, -1.0),
            (t, 0.0, 1.0),
            (-t, 0.0, -1.0),
            (-t, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
        .collect();
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..level {
            let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
            let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
                *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                    verts.len() - 1
                })
            };
            let mut next = Vec::with_capacity(faces.len() * 4);
            for [a, b, c] in faces {
                let ab = mid(a, b, &mut verts);
                let bc = mid(b, c, &mut verts);
                let ca = mid(c, a, &mut verts);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        let verts = verts.into_iter().map(|v| v * radius).collect();
        TriMesh::new(verts, faces)
            .expect("icosphere indices are valid")
            .orient_outward()
    }

    /// Closed capsule around the segment `a -> b`. `rings` latitude rings per
    /// hemisphere, `segments` around the axis; the cylinder gets extra rings
    /// spaced at most one radius apart.
    pub fn capsule(a: &Vec3, b: &Vec3, radius: f64, rings: usize, segments: usize) -> TriMesh {
        let rings = rings.max(2);
        let segments = segments.max(3);
        let axis = b - a;
        let len = axis.norm();
        let z = if len > 0.0 { axis / len } else { Vec3::z() };
        let helper = if z.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let x = z.cross(&helper).normalize();
        let y = z.cross(&x);
        let frame = |u: f64, v: f64, w: f64| a + x * u + y * v + z * w;

        let mut verts = vec![frame(0.0, 0.0, -radius)];
        // Latitudes from just above the south pole to just below the north pole.
        let mut lats: Vec<(f64, f64)> = Vec::new();
        for i in 1..=rings {
            let phi = -std::f64::consts::FRAC_PI_2 + std::f64::consts::FRAC_PI_2 * i as f64 / rings as f64;
            lats.push((phi, 0.0));
        }
        let spans = (len / radius).ceil().max(1.0) as usize;
        for k in 1..spans {
            lats.push((0.0, len * k as f64 / spans as f64));
        }
        for i in 0..rings {
            let phi = std::f64::consts::FRAC_PI_2 * i as f64 / rings as f64;
            if i == 0 && len == 0.0 {
                continue;
            }
            lats.push((phi, len));
        }
        for &(phi, shift) in &lats {
            for s in 0..segments {
                let th = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
                verts.push(frame(
                    radius * phi.cos() * th.cos(),
                    radius * phi.cos() * th.sin(),
                    radius * phi.sin() + shift,
                ));
            }
        }
        verts.push(frame(0.0, 0.0, len + radius));
        let ring = |r: usize, s: usize| 1 + r * segments + (s % segments);
        let north = verts.len() - 1;
        let mut faces = Vec::new();
        for s in 0..segments {
            faces.push([0, ring(0, s + 1), ring(0, s)]);
        }
        for r in 0..lats.len() - 1 {
            for s in 0..segments {
                faces.push([ring(r, s), ring(r, s + 1), ring(r + 1, s + 1)]);
                faces.push([ring(r, s), ring(r + 1, s + 1), ring(r + 1, s)]);
            }
        }
        let last = lats.len() - 1;
        for s in 0..segments {
            faces.push([north, ring(last, s), ring(last, s + 1)]);
        }
        TriMesh::new(verts, faces)
            .expect("capsule indices are valid")
            .orient_outward()
    }

    /// Axis-aligned box with 8 vertices and 12 faces.
    pub fn cuboid(min: &Vec3, max: &Vec3) -> TriMesh {
        let c = |i: usize| {
            Vec3::new(
                if i & 1 == 0 { min.x } else { max.x },
                if i & 2 == 0 { min.y } else { max.y },
                if i & 4 == 0 { min.z } else { max.z },
            )
        };
        let verts = (0..8).map(c).collect();
        let faces = vec![
            [0, 2, 1],
            [1, 2, 3],
            [4, 5, 6],
            [5, 7, 6],
            [0, 1, 4],
            [1, 5, 4],
            [2, 6, 3],
            [3, 6, 7],
            [0, 4, 2],
            [2, 4, 6],
            [1, 3, 5],
            [3, 7, 5],
        ];
        TriMesh::new(verts, faces)
            .expect("cuboid indices are valid")
            .orient_outward()
    }

    /// Unit tetrahedron.
    pub fn tetrahedron() -> TriMesh {
        let verts = vec![
            Vec3::zeros(),
            Vec3::x(),
            Vec3::y(),
            Vec3::z(),
        ];
        TriMesh::new(verts, vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
            .expect("tetrahedron indices are valid")
            .orient_outward()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts_and_topology() {
        let m = TriMesh::icosphere(3, 1.0);
        assert_eq!(m.vertices.len(), 642);
        m.check_closed_genus0().unwrap();
        let m4 = TriMesh::icosphere(4, 100.0);
        assert_eq!(m4.vertices.len(), 2562);
        assert!(m4.signed_volume() > 0.0);
        for (v, n) in m4.vertices.iter().zip(&m4.normals) {
            assert!((n.norm() - 1.0).abs() < 1e-6);
            assert!(n.dot(&v.normalize()) > 0.99);
        }
    }

    #[test]
    fn capsule_is_closed_sphere_topology() {
        let m = TriMesh::capsule(&Vec3::zeros(), &Vec3::new(0.0, 0.0, 40.0), 8.0, 6, 16);
        m.check_closed_genus0().unwrap();
        assert!(m.signed_volume() > 0.0);
        let cyl = std::f64::consts::PI * 64.0 * 40.0;
        let sph = 4.0 / 3.0 * std::f64::consts::PI * 512.0;
        let v = m.signed_volume();
        assert!(v < cyl + sph && v > 0.85 * (cyl + sph));
    }

    #[test]
    fn cuboid_volume() {
        let m = TriMesh::cuboid(&Vec3::zeros(), &Vec3::new(10.0, 10.0, 10.0));
        m.check_closed_genus0().unwrap();
        assert!((m.signed_volume() - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn open_mesh_is_reported() {
        let m = TriMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 1, 2]],
        )
        .unwrap();
        match m.check_watertight() {
            Err(Error::NotWatertight { count, .. }) => assert_eq!(count, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_face_rejected() {
        assert!(TriMesh::new(vec![Vec3::zeros()], vec![[0, 1, 2]]).is_err());
    }
}
