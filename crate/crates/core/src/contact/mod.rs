//! Hand-object interpenetration analysis: AABB-accelerated ray queries,
//! penetration pairs, geodesic diffusion of contact into deformation
//! targets, and the intersection-volume metric.

pub mod aabb;
pub mod geodesic;
pub mod penetration;
pub mod targets;
pub mod volume;

pub use aabb::{AabbTree, RayHit};
pub use geodesic::{geodesic_distances, GeodesicGraph};
pub use penetration::{detect_penetrations, PenetrationPair};
pub use targets::{compute_contact_map, compute_contact_targets, impact_factor, ContactTargets};
pub use volume::intersection_volume;

/// Default diffusion decay per millimetre of geodesic distance.
pub const DEFAULT_LAMBDA_C: f64 = 0.2;
/// Impact factors below this value have no influence.
pub const IMPACT_CUTOFF: f64 = 0.02;
