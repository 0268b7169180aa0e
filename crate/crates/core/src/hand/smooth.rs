//! Exponential moving average over hand poses.

use super::kinematics::HandPose;
use crate::geometry::{align_axis_angle, canonical_axis_angle, Vec3};

/// Blends an axis-angle vector towards `prev` after choosing the
/// representation of `cur` nearest to `prev`.
pub fn blend_axis_angle(prev: &Vec3, cur: &Vec3, alpha: f64) -> Vec3 {
    let aligned = align_axis_angle(cur, prev);
    canonical_axis_angle(&(alpha * aligned + (1.0 - alpha) * prev))
}

/// `alpha * current + (1 - alpha) * last`, where `last` is the most recent
/// entry of `history` (itself already smoothed). Empty history or
/// `alpha == 1` returns `current` unchanged.
pub fn smooth_pose(history: &[HandPose], current: &HandPose, alpha: f64) -> HandPose {
    let Some(prev) = history.last() else {
        return current.clone();
    };
    if alpha >= 1.0 || prev.joint_rotations.len() != current.joint_rotations.len() {
        return current.clone();
    }
    HandPose {
        frame: current.frame,
        root_rotation: blend_axis_angle(&prev.root_rotation, &current.root_rotation, alpha),
        root_translation: alpha * current.root_translation + (1.0 - alpha) * prev.root_translation,
        joint_rotations: prev
            .joint_rotations
            .iter()
            .zip(&current.joint_rotations)
            .map(|(p, c)| blend_axis_angle(p, c, alpha))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose(v: f64) -> HandPose {
        HandPose {
            frame: 0,
            root_rotation: Vec3::new(v, 0.0, 0.0),
            root_translation: Vec3::new(v, 0.0, 0.0),
            joint_rotations: vec![Vec3::new(0.0, v, 0.0); 2],
        }
    }

    #[test]
    fn alpha_one_and_empty_history() {
        let c = pose(0.3);
        assert_eq!(smooth_pose(&[pose(0.1)], &c, 1.0), c);
        assert_eq!(smooth_pose(&[], &c, 0.5), c);
    }

    #[test]
    fn constant_history_is_fixed_point() {
        let c = pose(0.37);
        let out = smooth_pose(&[c.clone(), c.clone()], &c, 0.7);
        let d: f64 = out.to_vec().iter().zip(c.to_vec()).map(|(a, b)| (a - b).abs()).sum();
        assert!(d < 1e-15);
    }

    #[test]
    fn filter_definition() {
        let out = smooth_pose(&[pose(0.0)], &pose(1.0), 0.7);
        assert!((out.root_translation.x - 0.7).abs() < 1e-15);
        assert!((out.root_rotation.x - 0.7).abs() < 1e-15);
        assert!((out.joint_rotations[1].y - 0.7).abs() < 1e-15);
    }

    #[test]
    fn blends_across_the_pi_seam() {
        use std::f64::consts::PI;
        // Rotations of +-(pi - 0.05) about x are 0.1 rad apart; the blend must
        // stay near the seam rather than pass through the identity.
        let prev = Vec3::new(PI - 0.05, 0.0, 0.0);
        let cur = Vec3::new(-(PI - 0.05), 0.0, 0.0);
        let out = blend_axis_angle(&prev, &cur, 0.5);
        assert!((out.norm() - PI).abs() < 1e-9);
    }
}
