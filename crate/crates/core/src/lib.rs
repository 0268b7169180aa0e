//! Offline multi-view reconstruction of hands interacting with deformable
//! objects.
//!
//! The crate is organised along the stages of the reconstruction:
//!
//! * [`io`]: cameras, meshes, keypoints, masks, hand models and stage outputs.
//! * [`raster`]: z-buffered silhouette rendering with hand occlusion.
//! * [`hand`]: keypoint triangulation, skeleton fitting, smoothing and skinning.
//! * [`object_pose`]: silhouette-driven genetic search for the rigid object pose.
//! * [`contact`]: AABB trees, penetration detection, geodesics and contact targets.
//! * [`deform`]: embedded deformation graph and its Gauss-Newton solver.
//! * [`eval`]: mIoU, joint error, intersection volume and the term ablation.
//! * [`synth`]: deterministic synthetic scenes with exact ground truth.
//! * [`pipeline`]: per-sequence orchestration with resumable per-frame outputs.
//!
//! All world coordinates are millimetres. Data-parallel loops go through
//! [`par`], which uses rayon when the `parallel` feature is enabled and plain
//! iterators otherwise; results are identical either way.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contact;
pub mod deform;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod hand;
pub mod io;
pub mod mesh;
pub mod object_pose;
pub mod par;
pub mod pipeline;
pub mod raster;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{Mat3, Vec2, Vec3};
pub use io::camera::CameraParams;
pub use io::mask::MaskImage;
pub use mesh::TriMesh;
