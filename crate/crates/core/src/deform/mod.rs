//! Non-rigid object deformation with an embedded deformation graph: graph
//! construction, the vertex warp, silhouette correspondences, the five-term
//! energy and its damped Gauss-Newton solver.

pub mod correspond;
pub mod energy;
pub mod graph;
pub mod solver;
pub mod sparse;

pub use correspond::{find_silhouette_correspondences, SilhouetteCorrespondence};
pub use energy::{EnergyBreakdown, EnergyInputs, Term};
pub use graph::{build_graph, DeformGraph, NodeTransform};
pub use solver::{solve_deformation, DeformFrame, DeformResult, TraceRow};

/// Weights of the contact, silhouette, temporal, rigidity and regularization
/// terms.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lambdas {
    pub cont: f64,
    pub silh: f64,
    pub temp: f64,
    pub rigid: f64,
    pub reg: f64,
}

impl Default for Lambdas {
    fn default() -> Self {
        Lambdas {
            cont: 5.0,
            silh: 5.0,
            temp: 1.0,
            rigid: 1.0,
            reg: 2.0,
        }
    }
}

impl Lambdas {
    pub fn get(&self, t: Term) -> f64 {
        match t {
            Term::Cont => self.cont,
            Term::Silh => self.silh,
            Term::Temp => self.temp,
            Term::Rigid => self.rigid,
            Term::Reg => self.reg,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.cont, self.silh, self.temp, self.rigid, self.reg]
    }

    /// Parses `"cont,silh,temp,rigid,reg"`.
    pub fn parse(s: &str) -> Option<Lambdas> {
        let v: Vec<f64> = s.split(',').map(|x| x.trim().parse().ok()).collect::<Option<_>>()?;
        if v.len() != 5 || v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return None;
        }
        Some(Lambdas {
            cont: v[0],
            silh: v[1],
            temp: v[2],
            rigid: v[3],
            reg: v[4],
        })
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeformConfig {
    pub lambdas: Lambdas,
    /// Minimum geodesic spacing between graph nodes, mm.
    pub node_spacing: f64,
    /// Nodes bound to each vertex.
    pub k_neighbors: usize,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub initial_damping: f64,
    /// Maximum pixel distance of a silhouette correspondence.
    pub gating_radius_px: f64,
    pub lambda_c: f64,
}

impl Default for DeformConfig {
    fn default() -> Self {
        DeformConfig {
            lambdas: Lambdas::default(),
            node_spacing: 15.0,
            k_neighbors: 4,
            outer_iterations: 5,
            inner_iterations: 10,
            initial_damping: 1e-3,
            gating_radius_px: 20.0,
            lambda_c: crate::contact::DEFAULT_LAMBDA_C,
        }
    }
}

impl DeformConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: &str| Err(crate::Error::InvalidConfig(m.to_string()));
        if !self.lambdas.as_array().iter().all(|l| l.is_finite() && *l >= 0.0) {
            return bad("energy weights must be finite and non-negative");
        }
        if !(self.node_spacing > 0.0 && self.node_spacing.is_finite()) {
            return bad("node spacing must be positive");
        }
        if self.k_neighbors < 2 {
            return bad("k_neighbors must be at least 2");
        }
        if self.outer_iterations == 0 || self.inner_iterations == 0 {
            return bad("iteration counts must be at least 1");
        }
        if !(self.initial_damping > 0.0 && self.gating_radius_px > 0.0 && self.lambda_c > 0.0) {
            return bad("damping, gating radius and lambda_c must be positive");
        }
        Ok(())
    }
}
