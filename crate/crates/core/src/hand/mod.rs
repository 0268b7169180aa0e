//! Per-frame hand reconstruction: multi-view keypoint triangulation, skeleton
//! pose fitting, temporal smoothing and linear blend skinning.

pub mod kinematics;
pub mod model;
pub mod skin;
pub mod smooth;
pub mod solve;
pub mod triangulate;

pub use kinematics::{forward_kinematics, BoneTransform, HandPose, Skeleton3D};
pub use model::HandModel;
pub use skin::skin_hand;
pub use smooth::{blend_axis_angle, smooth_pose};
pub use solve::{solve_hand_pose, HandSolveConfig, HandSolveReport, ResidualLoss};
pub use triangulate::{triangulate_keypoint, triangulate_skeleton, TriangulationError};

/// Detections at or below this confidence do not count as a valid view.
pub const DEFAULT_CONF_THRESHOLD: f64 = 0.6;

/// EMA weight of the current frame in temporal smoothing.
pub const DEFAULT_SMOOTHING_ALPHA: f64 = 0.7;
