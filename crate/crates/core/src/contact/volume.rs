//! Voxelised volume of the overlap between two closed meshes.

use super::aabb::AabbTree;
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};
use crate::mesh::TriMesh;
use crate::par;

/// Sorted crossings of the line `(x, y, z)` for increasing `x` with a closed
/// mesh, starting left of `x0`. `None` if the line grazes an edge.
fn crossings(tree: &AabbTree, x0: f64, y: f64, z: f64) -> Option<Vec<f64>> {
    let o = Vec3::new(x0, y, z);
    let hits = tree.all_hits(&o, &Vec3::x());
    if hits.iter().any(|h| h.grazing) {
        return None;
    }
    Some(hits.iter().map(|h| h.point.x).collect())
}

fn inside_along(cross: &[f64], x: f64) -> bool {
    cross.partition_point(|&c| c < x) % 2 == 1
}

/// Counts voxel centres inside both meshes over the overlap of their
/// bounding boxes. Returns cubic centimetres.
pub fn intersection_volume(a: &TriMesh, b: &TriMesh, voxel_mm: f64) -> Result<f64> {
    if !(voxel_mm > 0.0) {
        return Err(Error::InvalidInput(format!("voxel size must be positive, got {voxel_mm}")));
    }
    a.check_watertight()?;
    b.check_watertight()?;
    let region: Aabb = a.bbox().intersection(&b.bbox());
    if region.is_empty() {
        return Ok(0.0);
    }
    let ext = region.extent();
    let counts = [0, 1, 2].map(|i| ((ext[i] / voxel_mm).ceil() as usize).max(1));
    let origin = region.center() - Vec3::new(counts[0] as f64, counts[1] as f64, counts[2] as f64) * (0.5 * voxel_mm);
    let ta = AabbTree::build(a);
    let tb = AabbTree::build(b);
    let x0 = a.bbox().min.x.min(b.bbox().min.x) - 1.0;
    let lines = counts[1] * counts[2];
    let inside = par::map_range(lines, |l| {
        let (iy, iz) = (l % counts[1], l / counts[1]);
        let mut y = origin.y + (iy as f64 + 0.5) * voxel_mm;
        let mut z = origin.z + (iz as f64 + 0.5) * voxel_mm;
        let mut attempt = 0;
        let (ca, cb) = loop {
            if let (Some(ca), Some(cb)) = (crossings(&ta, x0, y, z), crossings(&tb, x0, y, z)) {
                break (ca, cb);
            }
            attempt += 1;
            y += 1e-7 * voxel_mm * attempt as f64;
            z += 1.3e-7 * voxel_mm * attempt as f64;
        };
        (0..counts[0])
            .filter(|&ix| {
                let x = origin.x + (ix as f64 + 0.5) * voxel_mm;
                inside_along(&ca, x) && inside_along(&cb, x)
            })
            .count()
    });
    let n: usize = inside.iter().sum();
    Ok(n as f64 * voxel_mm.powi(3) / 1000.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(min: Vec3, size: f64) -> TriMesh {
        TriMesh::cuboid(&min, &(min + Vec3::repeat(size)))
    }

    #[test]
    fn disjoint_is_zero() {
        let v = intersection_volume(&cube(Vec3::zeros(), 10.0), &cube(Vec3::new(20.0, 0.0, 0.0), 10.0), 1.0).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn slab_overlap() {
        let a = cube(Vec3::zeros(), 10.0);
        let b = cube(Vec3::new(5.0, 0.0, 0.0), 10.0);
        let v1 = intersection_volume(&a, &b, 1.0).unwrap();
        assert!((v1 - 0.5).abs() <= 0.025, "{v1}");
        let v05 = intersection_volume(&a, &b, 0.5).unwrap();
        assert!((v05 - v1).abs() / v1 < 0.05);
    }

    #[test]
    fn identical_cubes() {
        let a = cube(Vec3::new(0.3, -0.2, 0.1), 10.0);
        let v = intersection_volume(&a, &a, 1.0).unwrap();
        assert!((v - 1.0).abs() <= 0.05, "{v}");
    }

    #[test]
    fn open_mesh_rejected() {
        let mut a = cube(Vec3::zeros(), 10.0);
        a.faces.pop();
        assert!(intersection_volume(&a, &a, 1.0).is_err());
    }
}
