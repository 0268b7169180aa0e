//! Forward kinematics of the hand skeleton and its analytic Jacobian.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::model::HandModel;
use crate::geometry::{rotation_from_axis_angle, rotation_jacobian, Mat3, Vec3};

/// Skeleton pose: root rotation and translation plus one axis-angle rotation
/// per articulated joint, in [`HandModel::articulated`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandPose {
    pub frame: usize,
    pub root_rotation: Vec3,
    pub root_translation: Vec3,
    pub joint_rotations: Vec<Vec3>,
}

impl HandPose {
    pub fn rest(model: &HandModel, frame: usize) -> HandPose {
        HandPose {
            frame,
            root_rotation: Vec3::zeros(),
            root_translation: Vec3::zeros(),
            joint_rotations: vec![Vec3::zeros(); model.articulated().len()],
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(6 + 3 * self.joint_rotations.len());
        v.extend(self.root_rotation.iter());
        v.extend(self.root_translation.iter());
        for r in &self.joint_rotations {
            v.extend(r.iter());
        }
        v
    }

    pub fn from_vec(frame: usize, v: &[f64]) -> HandPose {
        let at = |i: usize| Vec3::new(v[i], v[i + 1], v[i + 2]);
        HandPose {
            frame,
            root_rotation: at(0),
            root_translation: at(3),
            joint_rotations: (6..v.len()).step_by(3).map(at).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|x| x.is_finite())
    }
}

/// 3D joint positions with a per-joint validity flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton3D {
    pub joints: Vec<Vec3>,
    pub valid: Vec<bool>,
}

impl Skeleton3D {
    pub fn all_valid(joints: Vec<Vec3>) -> Skeleton3D {
        let valid = vec![true; joints.len()];
        Skeleton3D { joints, valid }
    }

    /// Joints whose incoming bone length differs from the rest length by more
    /// than 20%. Only bones with both ends valid are checked.
    pub fn implausible_bones(&self, model: &HandModel) -> Vec<usize> {
        let rest = model.rest_bone_lengths();
        (1..self.joints.len())
            .filter(|&c| {
                let Some(p) = model.parents[c] else { return false };
                if !(self.valid[c] && self.valid[p]) || rest[c] == 0.0 {
                    return false;
                }
                let l = (self.joints[c] - self.joints[p]).norm();
                (l - rest[c]).abs() > 0.2 * rest[c]
            })
            .collect()
    }
}

/// Per-joint rigid transform mapping rest space to posed space:
/// `x -> rotation * (x - rest_j) + rest_j + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoneTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl BoneTransform {
    pub fn apply(&self, x: &Vec3, rest_joint: &Vec3) -> Vec3 {
        x + (self.rotation - Mat3::identity()) * (x - rest_joint) + self.translation
    }
}

/// Local rotation of every joint: root rotation, articulated joint rotations,
/// identity at the leaves.
fn local_rotations(model: &HandModel, pose: &HandPose) -> Vec<Mat3> {
    let mut local = vec![Mat3::identity(); model.joint_count()];
    local[0] = rotation_from_axis_angle(&pose.root_rotation);
    for (k, &j) in model.articulated().iter().enumerate() {
        local[j] = rotation_from_axis_angle(&pose.joint_rotations[k]);
    }
    local
}

/// Posed joint positions and the per-joint rigid transforms. The root turns
/// about its own rest position and then translates; every child turns about
/// its own joint with the accumulated rotation of its ancestors. The zero
/// pose reproduces the rest joints exactly.
pub fn forward_kinematics(model: &HandModel, pose: &HandPose) -> (Skeleton3D, Vec<BoneTransform>) {
    let local = local_rotations(model, pose);
    let n = model.joint_count();
    let mut global = vec![Mat3::identity(); n];
    let mut disp = vec![Vec3::zeros(); n];
    global[0] = local[0];
    disp[0] = pose.root_translation;
    for c in 1..n {
        let p = model.parents[c].expect("non-root joint has a parent");
        let offset = model.rest_joints[c] - model.rest_joints[p];
        disp[c] = disp[p] + (global[p] - Mat3::identity()) * offset;
        global[c] = global[p] * local[c];
    }
    let joints = (0..n).map(|j| model.rest_joints[j] + disp[j]).collect();
    let bones = (0..n)
        .map(|j| BoneTransform {
            rotation: global[j],
            translation: disp[j],
        })
        .collect();
    (Skeleton3D::all_valid(joints), bones)
}

/// Jacobian of the stacked posed joint positions (3J rows) with respect to
/// the pose vector (see [`HandPose::to_vec`]).
pub fn joint_jacobian(model: &HandModel, pose: &HandPose) -> DMatrix<f64> {
    let n = model.joint_count();
    let (skel, bones) = forward_kinematics(model, pose);
    let mut jac = DMatrix::zeros(3 * n, model.parameter_count());
    for j in 0..n {
        for i in 0..3 {
            jac[(3 * j + i, 3 + i)] = 1.0;
        }
    }
    // Rotation blocks: (joint carrying the rotation, its axis-angle, column).
    let mut blocks = vec![(0usize, pose.root_rotation, 0usize)];
    for (k, &a) in model.articulated().iter().enumerate() {
        blocks.push((a, pose.joint_rotations[k], 6 + 3 * k));
    }
    for (a, w, col) in blocks {
        let dr = rotation_jacobian(&w);
        let parent_rot = model.parents[a].map_or(Mat3::identity(), |p| bones[p].rotation);
        let ga_t = bones[a].rotation.transpose();
        for j in 0..n {
            if j != a && !model.is_ancestor(a, j) {
                continue;
            }
            let u = ga_t * (skel.joints[j] - skel.joints[a]);
            for (i, d) in dr.iter().enumerate() {
                let col_v = parent_rot * (d * u);
                for r in 0..3 {
                    jac[(3 * j + r, col + i)] = col_v[r];
                }
            }
        }
    }
    jac
}
