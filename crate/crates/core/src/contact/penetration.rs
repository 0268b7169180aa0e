//! Object vertices inside the hand and their matched hand-surface points.

use super::aabb::AabbTree;
use crate::error::Result;
use crate::geometry::Vec3;
use crate::mesh::TriMesh;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenetrationPair {
    pub object_vertex: usize,
    pub hand_point: Vec3,
    pub depth: f64,
}

/// Finds object vertices inside the (watertight) hand. Each is matched to
/// the first hand-surface point along its inward object normal, which is
/// where the hand surface lies once the object is pushed out of the hand;
/// the closest surface point is used if that ray misses.
pub fn detect_penetrations(object: &TriMesh, hand: &TriMesh, hand_tree: &AabbTree) -> Result<Vec<PenetrationPair>> {
    hand.check_watertight()?;
    let hand_box = hand_tree.bbox();
    let found = par::map_range(object.vertices.len(), |i| {
        let p = object.vertices[i];
        if hand_box.distance_squared(&p) > 0.0 || !hand_tree.contains(&p) {
            return None;
        }
        let dir = -object.normals[i];
        let q = match hand_tree.first_hit(&p, &dir) {
            Some(h) => h.point,
            None => hand_tree.closest_point(&p)?.0,
        };
        Some(PenetrationPair {
            object_vertex: i,
            hand_point: q,
            depth: (q - p).norm(),
        })
    });
    Ok(found.into_iter().flatten().collect())
}
