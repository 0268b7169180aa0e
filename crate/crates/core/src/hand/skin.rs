//! Linear blend skinning of the hand template.

use super::kinematics::{forward_kinematics, HandPose};
use super::model::HandModel;
use crate::mesh::TriMesh;
use crate::par;

/// Skins the rest mesh with the per-joint transforms of `pose`. Written as a
/// displacement of the rest vertex so the zero pose reproduces it exactly.
pub fn skin_hand(model: &HandModel, pose: &HandPose) -> TriMesh {
    let (_, bones) = forward_kinematics(model, pose);
    let verts = par::map_range(model.rest_mesh.vertices.len(), |i| {
        let v = model.rest_mesh.vertices[i];
        let mut d = v * 0.0;
        for &(j, w) in &model.weights[i] {
            d += w * (bones[j].apply(&v, &model.rest_joints[j]) - v);
        }
        v + d
    });
    model.rest_mesh.with_vertices(verts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rotation_from_axis_angle, Vec3};

    #[test]
    fn zero_pose_reproduces_rest() {
        let h = HandModel::generic();
        let m = skin_hand(&h, &HandPose::rest(&h, 0));
        assert_eq!(m.vertices, h.rest_mesh.vertices);
    }

    #[test]
    fn root_motion_is_rigid() {
        let h = HandModel::generic();
        let mut p = HandPose::rest(&h, 0);
        p.root_rotation = Vec3::new(0.3, -0.8, 0.2);
        p.root_translation = Vec3::new(4.0, 5.0, -6.0);
        let r = rotation_from_axis_angle(&p.root_rotation);
        let root = h.rest_joints[0];
        let m = skin_hand(&h, &p);
        for (a, v) in m.vertices.iter().zip(&h.rest_mesh.vertices) {
            let expect = r * (v - root) + root + p.root_translation;
            assert!((a - expect).norm() < 1e-9);
        }
    }

    #[test]
    fn fully_weighted_vertices_follow_their_bone() {
        let g = HandModel::generic();
        let mut weights = g.weights.clone();
        for ws in weights.iter_mut() {
            let top = ws.iter().cloned().fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
            if top.0 == 6 {
                *ws = vec![(6, 1.0)];
            }
        }
        let h = HandModel::new(g.parents.clone(), g.rest_joints.clone(), g.rest_mesh.clone(), weights).unwrap();
        let mut p = HandPose::rest(&h, 0);
        let k = h.articulated().iter().position(|&j| j == 6).unwrap();
        p.joint_rotations[k] = Vec3::new(0.0, 0.7, 0.2);
        let (s, _) = forward_kinematics(&h, &p);
        let r = rotation_from_axis_angle(&p.joint_rotations[k]);
        let m = skin_hand(&h, &p);
        let mut checked = 0;
        for (i, ws) in h.weights.iter().enumerate() {
            if ws.len() == 1 && ws[0].0 == 6 {
                let v = h.rest_mesh.vertices[i];
                let expect = s.joints[6] + r * (v - h.rest_joints[6]);
                assert!((m.vertices[i] - expect).norm() < 1e-9);
                checked += 1;
            }
        }
        // Palm vertices are fully weighted to the wrist and must not move.
        for (i, ws) in h.weights.iter().enumerate() {
            if ws.len() == 1 && ws[0].0 == 0 {
                assert_eq!(m.vertices[i], h.rest_mesh.vertices[i]);
            }
        }
        assert!(checked > 20);
    }
}
