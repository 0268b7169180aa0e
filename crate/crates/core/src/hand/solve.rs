//! Skeleton pose fitting to triangulated and 2D keypoints by damped
//! Gauss-Newton with iteratively reweighted robust residuals.

use nalgebra::{DMatrix, DVector};

use super::kinematics::{forward_kinematics, joint_jacobian, HandPose, Skeleton3D};
use super::model::HandModel;
use crate::geometry::{canonical_axis_angle, fit_rigid, Vec2, Vec3};
use crate::io::camera::CameraParams;
use crate::io::keypoints::KeypointObservation;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualLoss {
    /// Huber on the residual norm, quadratic below `delta` (px or mm).
    Huber { delta: f64 },
    /// The plain Euclidean norm of each residual.
    Norm,
}

impl ResidualLoss {
    pub fn value(&self, s: f64) -> f64 {
        match *self {
            ResidualLoss::Huber { delta } if s <= delta => 0.5 * s * s,
            ResidualLoss::Huber { delta } => delta * (s - 0.5 * delta),
            ResidualLoss::Norm => s,
        }
    }

    /// IRLS weight `rho'(s) / s`.
    fn weight(&self, s: f64) -> f64 {
        match *self {
            ResidualLoss::Huber { delta } if s <= delta => 1.0,
            ResidualLoss::Huber { delta } => delta / s,
            ResidualLoss::Norm => 1.0 / s.max(1e-6),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HandSolveConfig {
    pub conf_threshold: f64,
    pub max_iterations: usize,
    pub loss: ResidualLoss,
    pub initial_damping: f64,
}

impl Default for HandSolveConfig {
    fn default() -> Self {
        HandSolveConfig {
            conf_threshold: super::DEFAULT_CONF_THRESHOLD,
            max_iterations: 50,
            loss: ResidualLoss::Huber { delta: 5.0 },
            initial_damping: 1e-3,
        }
    }
}

impl HandSolveConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: &str| Err(crate::Error::InvalidConfig(m.to_string()));
        if !(0.0..1.0).contains(&self.conf_threshold) {
            return bad("confidence threshold must be in [0, 1)");
        }
        if self.max_iterations == 0 {
            return bad("hand max_iterations must be at least 1");
        }
        if let ResidualLoss::Huber { delta } = self.loss {
            if !(delta > 0.0) {
                return bad("Huber delta must be positive");
            }
        }
        if !(self.initial_damping > 0.0) {
            return bad("hand initial damping must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HandSolveReport {
    pub pose: HandPose,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Term {
    Joint { joint: usize, target: Vec3 },
    Pixel { joint: usize, cam: usize, uv: Vec2 },
}

/// The residual terms of one frame's fit, with invalid joints and views
/// already removed.
pub struct HandProblem<'a> {
    model: &'a HandModel,
    cams: &'a [CameraParams],
    terms: Vec<Term>,
}

/// One residual (model minus observation) and its Jacobian.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub residual: DVector<f64>,
    pub jacobian: DMatrix<f64>,
}

impl<'a> HandProblem<'a> {
    pub fn new(
        model: &'a HandModel,
        kp3d: &Skeleton3D,
        kp2d: &[KeypointObservation],
        cams: &'a [CameraParams],
        conf_threshold: f64,
    ) -> Self {
        let mut terms = Vec::new();
        for j in 0..model.joint_count().min(kp3d.joints.len()) {
            if kp3d.valid[j] && kp3d.joints[j].iter().all(|x| x.is_finite()) {
                terms.push(Term::Joint {
                    joint: j,
                    target: kp3d.joints[j],
                });
            }
        }
        for o in kp2d {
            if o.confidence <= conf_threshold || o.joint >= model.joint_count() {
                continue;
            }
            if let Some(cam) = cams.iter().position(|c| c.id == o.view) {
                terms.push(Term::Pixel {
                    joint: o.joint,
                    cam,
                    uv: o.uv,
                });
            }
        }
        HandProblem { model, cams, terms }
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// Residual blocks at `pose`; pixel terms whose joint falls behind the
    /// camera are skipped.
    pub fn blocks(&self, pose: &HandPose, with_jacobian: bool) -> Vec<ResidualBlock> {
        let (skel, _) = forward_kinematics(self.model, pose);
        let jf = with_jacobian.then(|| joint_jacobian(self.model, pose));
        let np = self.model.parameter_count();
        let mut out = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            match *t {
                Term::Joint { joint, target } => {
                    let r = skel.joints[joint] - target;
                    let jac = match &jf {
                        Some(jf) => jf.rows(3 * joint, 3).into_owned(),
                        None => DMatrix::zeros(0, np),
                    };
                    out.push(ResidualBlock {
                        residual: DVector::from_column_slice(r.as_slice()),
                        jacobian: jac,
                    });
                }
                Term::Pixel { joint, cam, uv } => {
                    let Some((p, dp)) = self.cams[cam].project_with_jacobian(&skel.joints[joint]) else {
                        continue;
                    };
                    let r = p - uv;
                    let jac = match &jf {
                        Some(jf) => {
                            let dp = DMatrix::from_row_slice(2, 3, &[dp[(0, 0)], dp[(0, 1)], dp[(0, 2)], dp[(1, 0)], dp[(1, 1)], dp[(1, 2)]]);
                            dp * jf.rows(3 * joint, 3)
                        }
                        None => DMatrix::zeros(0, np),
                    };
                    out.push(ResidualBlock {
                        residual: DVector::from_column_slice(r.as_slice()),
                        jacobian: jac,
                    });
                }
            }
        }
        out
    }

    pub fn objective(&self, pose: &HandPose, loss: ResidualLoss) -> f64 {
        self.blocks(pose, false)
            .iter()
            .map(|b| loss.value(b.residual.norm()))
            .sum()
    }
}

/// Root-only pose that rigidly aligns the rest skeleton to the valid
/// triangulated joints. Falls back to the rest pose with fewer than three.
pub fn rest_aligned_pose(model: &HandModel, kp3d: &Skeleton3D, frame: usize) -> HandPose {
    let mut pose = HandPose::rest(model, frame);
    let (src, dst): (Vec<Vec3>, Vec<Vec3>) = (0..model.joint_count().min(kp3d.joints.len()))
        .filter(|&j| kp3d.valid[j])
        .map(|j| (model.rest_joints[j], kp3d.joints[j]))
        .unzip();
    if let Some((r, t)) = fit_rigid(&src, &dst) {
        let root = model.rest_joints[0];
        pose.root_rotation = crate::geometry::axis_angle_from_rotation(&r);
        pose.root_translation = r * root + t - root;
    }
    pose
}

fn canonicalize(pose: &mut HandPose) {
    pose.root_rotation = canonical_axis_angle(&pose.root_rotation);
    for w in &mut pose.joint_rotations {
        *w = canonical_axis_angle(w);
    }
}

/// Minimises the robust sum of 3D joint and 2D reprojection residuals over
/// the pose, starting from `init`. Steps that do not lower the objective are
/// rejected, so the objective never increases.
pub fn solve_hand_pose(
    model: &HandModel,
    kp3d: &Skeleton3D,
    kp2d: &[KeypointObservation],
    cams: &[CameraParams],
    init: &HandPose,
    cfg: &HandSolveConfig,
) -> HandSolveReport {
    let problem = HandProblem::new(model, kp3d, kp2d, cams, cfg.conf_threshold);
    let np = model.parameter_count();
    let mut pose = init.clone();
    let mut obj = problem.objective(&pose, cfg.loss);
    let mut trace = vec![obj];
    let mut mu = cfg.initial_damping;
    let mut converged = problem.term_count() == 0;
    let mut iterations = 0;
    while !converged && iterations < cfg.max_iterations {
        iterations += 1;
        let blocks = problem.blocks(&pose, true);
        let mut h = DMatrix::<f64>::zeros(np, np);
        let mut g = DVector::<f64>::zeros(np);
        for b in &blocks {
            let w = cfg.loss.weight(b.residual.norm());
            let jt = b.jacobian.transpose();
            h += w * &jt * &b.jacobian;
            g += w * &jt * &b.residual;
        }
        if g.amax() < 1e-12 {
            converged = true;
            break;
        }
        let diag_max = h.diagonal().max().max(1e-12);
        let mut accepted = false;
        while mu < 1e10 {
            let mut a = h.clone();
            for i in 0..np {
                a[(i, i)] += mu * h[(i, i)].max(1e-6 * diag_max);
            }
            let Some(chol) = a.cholesky() else {
                mu *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let x: Vec<f64> = pose.to_vec().iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let mut cand = HandPose::from_vec(pose.frame, &x);
            canonicalize(&mut cand);
            let cand_obj = problem.objective(&cand, cfg.loss);
            if cand_obj.is_finite() && cand_obj <= obj {
                let decrease = obj - cand_obj;
                pose = cand;
                obj = cand_obj;
                trace.push(obj);
                mu = (mu * 0.5).max(1e-12);
                accepted = true;
                if decrease <= 1e-12 * (1.0 + obj) || step.amax() < 1e-12 {
                    converged = true;
                }
                break;
            }
            mu *= 10.0;
        }
        if !accepted {
            // No descent direction improves the objective: a local minimum
            // to working precision.
            converged = true;
        }
    }
    if !converged {
        log::warn!(
            "hand pose solve for frame {} did not converge in {} iterations (objective {:.6})",
            init.frame,
            cfg.max_iterations,
            obj
        );
    }
    HandSolveReport {
        pose,
        iterations,
        converged,
        objective_trace: trace,
    }
}
