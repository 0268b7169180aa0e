//! Deformation targets diffused from penetration pairs, and contact maps.

use super::geodesic::GeodesicGraph;
use super::penetration::PenetrationPair;
use super::IMPACT_CUTOFF;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mesh::TriMesh;
use crate::par;

/// Influence of a penetration of depth `depth` at geodesic distance
/// `geodesic`: `depth * exp(-lambda_c * geodesic)`.
pub fn impact_factor(depth: f64, geodesic: f64, lambda_c: f64) -> f64 {
    depth * (-lambda_c * geodesic).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactTargets {
    pub targets: Vec<Vec3>,
    /// The vertex penetrates the hand or is reached by diffusion.
    pub affected: Vec<bool>,
    pub penetrating: Vec<bool>,
}

impl ContactTargets {
    pub fn unaffected(object: &TriMesh) -> ContactTargets {
        let n = object.vertices.len();
        ContactTargets {
            targets: object.vertices.clone(),
            affected: vec![false; n],
            penetrating: vec![false; n],
        }
    }

    pub fn affected_count(&self) -> usize {
        self.affected.iter().filter(|&&a| a).count()
    }
}

pub fn compute_contact_targets(object: &TriMesh, pairs: &[PenetrationPair], lambda_c: f64) -> ContactTargets {
    compute_contact_targets_with(&GeodesicGraph::new(object), object, pairs, lambda_c)
}

/// Penetrating vertices target their hand point. Every other vertex moves
/// against its normal by the mean impact factor of the pairs that reach it
/// with influence at or above the cutoff.
pub fn compute_contact_targets_with(
    graph: &GeodesicGraph,
    object: &TriMesh,
    pairs: &[PenetrationPair],
    lambda_c: f64,
) -> ContactTargets {
    let mut out = ContactTargets::unaffected(object);
    if pairs.is_empty() {
        return out;
    }
    // Geodesic reach of each pair: impact >= cutoff  <=>  G <= ln(d/c)/lambda.
    let reach = par::map_slice(pairs, |p| {
        if p.depth < IMPACT_CUTOFF {
            return Vec::new();
        }
        let radius = (p.depth / IMPACT_CUTOFF).ln() / lambda_c;
        graph
            .neighborhood(p.object_vertex, radius)
            .into_iter()
            .map(|(v, g)| (v, impact_factor(p.depth, g, lambda_c)))
            .filter(|&(_, i)| i >= IMPACT_CUTOFF)
            .collect::<Vec<_>>()
    });
    let n = object.vertices.len();
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for list in &reach {
        for &(v, i) in list {
            sum[v] += i;
            count[v] += 1;
        }
    }
    for p in pairs {
        out.penetrating[p.object_vertex] = true;
        out.affected[p.object_vertex] = true;
        out.targets[p.object_vertex] = p.hand_point;
    }
    for v in 0..n {
        if out.penetrating[v] || count[v] == 0 {
            continue;
        }
        out.affected[v] = true;
        out.targets[v] = object.vertices[v] - object.normals[v] * (sum[v] / count[v] as f64);
    }
    out
}

/// Per-vertex displacement magnitude between two meshes of equal topology.
pub fn compute_contact_map(rigid: &TriMesh, deformed: &TriMesh) -> Result<Vec<f64>> {
    if rigid.vertices.len() != deformed.vertices.len() || rigid.faces != deformed.faces {
        return Err(Error::InvalidMesh(format!(
            "contact map needs equal topology ({} vs {} vertices)",
            rigid.vertices.len(),
            deformed.vertices.len()
        )));
    }
    Ok(rigid
        .vertices
        .iter()
        .zip(&deformed.vertices)
        .map(|(a, b)| (b - a).norm())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Mat3;

    #[test]
    fn impact_examples() {
        assert_eq!(impact_factor(3.5, 0.0, 0.2), 3.5);
        let v = impact_factor(5.0, 10.0, 0.2);
        assert!((v - 5.0 * (-2.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.6767).abs() < 1e-4);
        assert!(impact_factor(0.01, 0.0, 0.2) < IMPACT_CUTOFF);
    }

    #[test]
    fn no_pairs_no_motion() {
        let m = TriMesh::icosphere(2, 10.0);
        let t = compute_contact_targets(&m, &[], 0.2);
        assert_eq!(t.targets, m.vertices);
        assert_eq!(t.affected_count(), 0);
    }

    #[test]
    fn single_pair_diffusion() {
        let m = TriMesh::icosphere(3, 50.0);
        let g = GeodesicGraph::new(&m);
        let src = 17;
        let d = 4.0;
        let pair = PenetrationPair {
            object_vertex: src,
            hand_point: m.vertices[src] - m.normals[src] * d,
            depth: d,
        };
        let t = compute_contact_targets_with(&g, &m, &[pair], 0.2);
        assert_eq!(t.targets[src], pair.hand_point);
        let geo = g.distances(&[src]);
        for (v, &gv) in geo.iter().enumerate() {
            let i = impact_factor(d, gv, 0.2);
            if v == src {
                continue;
            }
            if i >= IMPACT_CUTOFF {
                assert!(t.affected[v]);
                let disp = m.vertices[v] - t.targets[v];
                assert!((disp - m.normals[v] * i).norm() < 1e-12);
            } else {
                assert!(!t.affected[v]);
                assert_eq!(t.targets[v], m.vertices[v]);
            }
        }
    }

    #[test]
    fn contact_map_cases() {
        let m = TriMesh::icosphere(2, 10.0);
        assert!(compute_contact_map(&m, &m).unwrap().iter().all(|&x| x == 0.0));
        let moved = m.transformed(&Mat3::identity(), &Vec3::new(0.0, 3.0, 0.0));
        for x in compute_contact_map(&m, &moved).unwrap() {
            assert!((x - 3.0).abs() < 1e-12);
        }
        assert!(compute_contact_map(&m, &TriMesh::icosphere(1, 10.0)).is_err());
    }
}
