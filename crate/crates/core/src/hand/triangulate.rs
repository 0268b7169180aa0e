//! Linear multi-view triangulation of hand keypoints.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, Matrix3x4};

use super::kinematics::Skeleton3D;
use crate::geometry::{skew, Vec3};
use crate::io::camera::CameraParams;
use crate::io::keypoints::KeypointObservation;
use crate::par;

/// Minimum angle between two valid viewing rays, in degrees.
const MIN_RAY_ANGLE_DEG: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TriangulationError {
    #[error("only {valid} valid view(s); at least 2 required")]
    TooFewViews { valid: usize },
    #[error("all valid viewing rays are parallel within {MIN_RAY_ANGLE_DEG} degrees")]
    Degenerate,
    #[error("linear system is singular")]
    Singular,
}

/// `K [R | T]` for one camera.
pub fn projection_matrix(cam: &CameraParams) -> Matrix3x4<f64> {
    let mut rt = Matrix3x4::zeros();
    rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&cam.r);
    rt.fixed_view_mut::<3, 1>(0, 3).copy_from(&cam.t);
    cam.k * rt
}

fn valid_views<'a>(
    obs: &'a [KeypointObservation],
    cams: &HashMap<usize, &'a CameraParams>,
    conf_threshold: f64,
) -> Vec<(&'a KeypointObservation, &'a CameraParams)> {
    obs.iter()
        .filter(|o| o.confidence > conf_threshold)
        .filter_map(|o| cams.get(&o.view).map(|c| (o, *c)))
        .collect()
}

fn camera_map(cams: &[CameraParams]) -> HashMap<usize, &CameraParams> {
    cams.iter().map(|c| (c.id, c)).collect()
}

/// Stacked cross-product rows `[x]_x K [R | T]` of all views; the 3D point
/// `k` satisfies `A[:, :3] k + A[:, 3] = 0` for exact observations.
fn stacked_system(views: &[(&KeypointObservation, &CameraParams)]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(3 * views.len(), 4);
    for (n, (o, cam)) in views.iter().enumerate() {
        let x = Vec3::new(o.uv.x, o.uv.y, 1.0);
        let rows = skew(&x) * projection_matrix(cam);
        a.view_mut((3 * n, 0), (3, 4)).copy_from(&rows);
    }
    a
}

/// Algebraic residual norm of the stacked system at `k`.
pub fn algebraic_residual(obs: &[KeypointObservation], cams: &[CameraParams], conf_threshold: f64, k: &Vec3) -> f64 {
    let map = camera_map(cams);
    let views = valid_views(obs, &map, conf_threshold);
    let a = stacked_system(&views);
    (a * DVector::from_vec(vec![k.x, k.y, k.z, 1.0])).norm()
}

/// Triangulates one joint from its detections. Only detections with
/// confidence strictly above `conf_threshold` whose camera is known count.
pub fn triangulate_keypoint(
    obs: &[KeypointObservation],
    cams: &[CameraParams],
    conf_threshold: f64,
) -> Result<Vec3, TriangulationError> {
    let map = camera_map(cams);
    let views = valid_views(obs, &map, conf_threshold);
    if views.len() < 2 {
        return Err(TriangulationError::TooFewViews { valid: views.len() });
    }
    let rays: Vec<Vec3> = views.iter().map(|(o, c)| c.ray_direction(&o.uv)).collect();
    let min_cos = MIN_RAY_ANGLE_DEG.to_radians().cos();
    let spread = rays
        .iter()
        .enumerate()
        .any(|(i, a)| rays[i + 1..].iter().any(|b| a.dot(b).abs() < min_cos));
    if !spread {
        return Err(TriangulationError::Degenerate);
    }
    let a = stacked_system(&views);
    let lhs = a.columns(0, 3).into_owned();
    let rhs = -a.column(3).into_owned();
    let svd = lhs.svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) || svd.singular_values.min() <= smax * 1e-14 {
        return Err(TriangulationError::Singular);
    }
    let k = svd.solve(&rhs, 0.0).map_err(|_| TriangulationError::Singular)?;
    let k = Vec3::new(k[0], k[1], k[2]);
    if k.iter().all(|x| x.is_finite()) {
        Ok(k)
    } else {
        Err(TriangulationError::Singular)
    }
}

/// Triangulates every joint independently; failed joints are flagged invalid
/// and logged at debug level.
pub fn triangulate_skeleton(
    obs: &[KeypointObservation],
    cams: &[CameraParams],
    joint_count: usize,
    conf_threshold: f64,
) -> Skeleton3D {
    let mut per_joint: Vec<Vec<KeypointObservation>> = vec![Vec::new(); joint_count];
    for o in obs {
        if o.joint < joint_count {
            per_joint[o.joint].push(o.clone());
        }
    }
    let results = par::map_range(joint_count, |j| triangulate_keypoint(&per_joint[j], cams, conf_threshold));
    let mut joints = Vec::with_capacity(joint_count);
    let mut valid = Vec::with_capacity(joint_count);
    for (j, r) in results.into_iter().enumerate() {
        match r {
            Ok(k) => {
                joints.push(k);
                valid.push(true);
            }
            Err(e) => {
                log::debug!("joint {j} not triangulated: {e}");
                joints.push(Vec3::zeros());
                valid.push(false);
            }
        }
    }
    Skeleton3D { joints, valid }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rotation_from_axis_angle, Mat3, Vec2};
    use rand::{Rng, SeedableRng};

    fn ring(n: usize) -> Vec<CameraParams> {
        (0..n)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / n as f64;
                let c = Vec3::new(1000.0 * a.cos(), 1000.0 * a.sin(), 300.0);
                let fwd = (-c).normalize();
                let right = fwd.cross(&Vec3::z()).normalize();
                let down = fwd.cross(&right);
                let r = Mat3::from_rows(&[right.transpose(), down.transpose(), fwd.transpose()]);
                CameraParams {
                    id: i,
                    k: Mat3::new(800.0, 0.0, 320.0, 0.0, 800.0, 240.0, 0.0, 0.0, 1.0),
                    r,
                    t: -(r * c),
                    width: 640,
                    height: 480,
                }
            })
            .collect()
    }

    fn observe(p: &Vec3, cams: &[CameraParams], conf: f64) -> Vec<KeypointObservation> {
        cams.iter()
            .map(|c| KeypointObservation {
                view: c.id,
                joint: 0,
                uv: c.project(p).unwrap(),
                confidence: conf,
            })
            .collect()
    }

    #[test]
    fn noise_free_recovery() {
        let cams = ring(4);
        let p = Vec3::new(0.0, 0.0, 500.0);
        let k = triangulate_keypoint(&observe(&p, &cams, 1.0), &cams, 0.6).unwrap();
        assert!((k - p).norm() < 1e-6);
    }

    #[test]
    fn low_confidence_views_dropped() {
        let cams = ring(4);
        let mut obs = observe(&Vec3::new(0.0, 0.0, 500.0), &cams, 1.0);
        for o in &mut obs[1..] {
            o.confidence = 0.5;
        }
        assert_eq!(
            triangulate_keypoint(&obs, &cams, 0.6),
            Err(TriangulationError::TooFewViews { valid: 1 })
        );
        // Exactly at the threshold is not valid either.
        for o in &mut obs[1..] {
            o.confidence = 0.6;
        }
        assert!(triangulate_keypoint(&obs, &cams, 0.6).is_err());
    }

    #[test]
    fn parallel_rays_are_degenerate() {
        let base = ring(1).remove(0);
        let mut other = base.clone();
        other.id = 1;
        // Same orientation, 0.01 mm sideways: rays to a point 1 m away are
        // parallel far within 0.1 degrees.
        other.t += Vec3::new(0.01, 0.0, 0.0);
        let cams = vec![base, other];
        let obs = observe(&Vec3::new(0.0, 0.0, 100.0), &cams, 1.0);
        assert_eq!(triangulate_keypoint(&obs, &cams, 0.6), Err(TriangulationError::Degenerate));
    }

    #[test]
    fn returned_point_is_local_minimum() {
        let cams = ring(5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let p = Vec3::new(10.0, -20.0, 50.0);
        let mut obs = observe(&p, &cams, 1.0);
        for o in &mut obs {
            o.uv += Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        }
        let k = triangulate_keypoint(&obs, &cams, 0.6).unwrap();
        let r0 = algebraic_residual(&obs, &cams, 0.6, &k);
        for _ in 0..1000 {
            let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let scale = 10f64.powf(rng.random_range(-4.0..1.0));
            assert!(algebraic_residual(&obs, &cams, 0.6, &(k + d * scale)) >= r0);
        }
    }

    #[test]
    fn skeleton_flags_failed_joints() {
        let cams = ring(3);
        let r = rotation_from_axis_angle(&Vec3::new(0.1, 0.2, 0.3));
        let pts: Vec<Vec3> = (0..3).map(|j| r * Vec3::new(j as f64 * 20.0, 5.0, 0.0)).collect();
        let mut obs = Vec::new();
        for (j, p) in pts.iter().enumerate() {
            for mut o in observe(p, &cams, if j == 2 { 0.1 } else { 0.9 }) {
                o.joint = j;
                obs.push(o);
            }
        }
        let s = triangulate_skeleton(&obs, &cams, 3, 0.6);
        assert_eq!(s.valid, vec![true, true, false]);
        assert!((s.joints[1] - pts[1]).norm() < 1e-6);
    }
}
