//! Outer contact/correspondence refresh around damped Gauss-Newton on the
//! node parameters.

use serde::Serialize;

use super::correspond::{find_silhouette_correspondences, SilhouetteCorrespondence};
use super::energy::{all_residuals, breakdown, EnergyBreakdown, EnergyInputs};
use super::graph::{DeformGraph, NODE_PARAMS};
use super::sparse::{BlockVec, NormalEquations};
use super::DeformConfig;
use crate::contact::targets::compute_contact_targets_with;
use crate::contact::{detect_penetrations, AabbTree, ContactTargets, GeodesicGraph};
use crate::error::Result;
use crate::geometry::Vec3;
use crate::io::camera::CameraParams;
use crate::io::mask::MaskImage;
use crate::mesh::TriMesh;

const MAX_DAMPING: f64 = 1e8;
/// Lower bound on the damping factor. Parameters seen only through a few
/// contact residuals would otherwise take unbounded steps when the
/// regularizers are switched off.
const MIN_DAMPING: f64 = 1e-3;
const PCG_TOLERANCE: f64 = 1e-10;
const PCG_MAX_ITERATIONS: usize = 2000;

/// One frame's deformation problem.
#[derive(Debug, Clone)]
pub struct DeformFrame<'a> {
    pub frame: usize,
    /// Rigidly posed template.
    pub rest: &'a TriMesh,
    /// Graph posed with the template, identity transforms.
    pub graph: DeformGraph,
    pub hand: Option<&'a TriMesh>,
    pub masks: &'a [MaskImage],
    pub cams: &'a [CameraParams],
    /// Previous deformed vertices carried through the current rigid pose.
    pub last: Option<&'a [Vec3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub outer: usize,
    pub inner: usize,
    pub accepted: bool,
    pub damping: f64,
    pub energy: EnergyBreakdown,
}

#[derive(Debug, Clone)]
pub struct DeformResult {
    pub mesh: TriMesh,
    pub graph: DeformGraph,
    pub trace: Vec<TraceRow>,
}

/// CSV of the energy trace with the reported per-term values.
pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut s = String::from("outer,inner,accepted,damping,total,cont,silh,temp,rigid,reg,objective\n");
    for r in trace {
        let e = &r.energy;
        s.push_str(&format!(
            "{},{},{},{:e},{},{},{},{},{},{},{}\n",
            r.outer, r.inner, r.accepted as u8, r.damping, e.total, e.cont, e.silh, e.temp, e.rigid, e.reg, e.objective
        ));
    }
    s
}

/// Damped Gauss-Newton on fixed targets and correspondences. Steps that
/// raise the objective are rejected, so the objective never increases.
fn gauss_newton(
    graph: &mut DeformGraph,
    inputs: &EnergyInputs,
    cfg: &DeformConfig,
    damping: &mut f64,
    outer: usize,
    trace: &mut Vec<TraceRow>,
) {
    let lambdas = inputs.lambdas;
    let mut residuals = all_residuals(graph, inputs, true);
    let mut current = breakdown(&residuals, &lambdas);
    trace.push(TraceRow {
        outer,
        inner: 0,
        accepted: true,
        damping: *damping,
        energy: current,
    });
    for inner in 1..=cfg.inner_iterations {
        if current.objective == 0.0 {
            break;
        }
        let ne = NormalEquations::assemble(&graph.neighbors, &residuals, |r| lambdas.get(r.term));
        let diag = ne.diagonal();
        let floor = diag.iter().sum::<f64>() / diag.len().max(1) as f64 + 1e-12;
        let neg_g: Vec<BlockVec> = ne.rhs.iter().map(|g| -g).collect();
        let params = graph.params();
        let mut accepted = false;
        let mut last_energy = current;
        while *damping <= MAX_DAMPING {
            let damp: Vec<f64> = diag.iter().map(|d| *damping * (d + floor)).collect();
            let Some(step) = ne.solve(&damp, &neg_g, PCG_TOLERANCE, PCG_MAX_ITERATIONS) else {
                *damping *= 10.0;
                continue;
            };
            let mut cand = graph.clone();
            let mut p = params.clone();
            for (m, s) in step.iter().enumerate() {
                for i in 0..NODE_PARAMS {
                    p[m * NODE_PARAMS + i] += s[i];
                }
            }
            cand.set_params(&p);
            let e = breakdown(&all_residuals(&cand, inputs, false), &lambdas);
            last_energy = e;
            if e.objective.is_finite() && e.objective <= current.objective {
                let decrease = current.objective - e.objective;
                *graph = cand;
                current = e;
                *damping = (*damping * 0.5).max(MIN_DAMPING);
                accepted = true;
                trace.push(TraceRow {
                    outer,
                    inner,
                    accepted: true,
                    damping: *damping,
                    energy: e,
                });
                if decrease <= 1e-12 * (1.0 + current.objective) {
                    return;
                }
                break;
            }
            *damping *= 10.0;
        }
        if !accepted {
            trace.push(TraceRow {
                outer,
                inner,
                accepted: false,
                damping: *damping,
                energy: last_energy,
            });
            log::warn!("deformation damping exceeded {MAX_DAMPING:e}; keeping best iterate");
            return;
        }
        residuals = all_residuals(graph, inputs, true);
    }
}

/// Runs the outer loop: each iteration re-detects penetrations and
/// silhouette correspondences on the current warped mesh and then runs the
/// inner Gauss-Newton iterations. Contact targets persist across outer
/// iterations for vertices that stop penetrating, so resolved contacts are
/// not released back into the hand.
pub fn solve_deformation(frame: &DeformFrame, cfg: &DeformConfig) -> Result<DeformResult> {
    cfg.validate()?;
    let mut graph = frame.graph.clone();
    let rest = frame.rest;
    let n = rest.vertices.len();
    let hand_tree = frame.hand.map(AabbTree::build);
    let mut memory: Vec<Option<Vec3>> = vec![None; n];
    let mut damping = cfg.initial_damping;
    let mut trace = Vec::new();
    let lambdas = if frame.last.is_some() {
        cfg.lambdas
    } else {
        super::Lambdas { temp: 0.0, ..cfg.lambdas }
    };
    for outer in 0..cfg.outer_iterations {
        let warped = graph.warp(rest);
        if let (Some(hand), Some(tree)) = (frame.hand, hand_tree.as_ref()) {
            if lambdas.cont > 0.0 {
                let pairs = detect_penetrations(&warped, hand, tree)?;
                let fresh = compute_contact_targets_with(&GeodesicGraph::new(&warped), &warped, &pairs, cfg.lambda_c);
                for ((m, hit), t) in memory.iter_mut().zip(&fresh.affected).zip(&fresh.targets) {
                    if *hit {
                        *m = Some(*t);
                    }
                }
            }
        }
        let targets = ContactTargets {
            targets: (0..n).map(|v| memory[v].unwrap_or(warped.vertices[v])).collect(),
            affected: memory.iter().map(|m| m.is_some()).collect(),
            penetrating: vec![false; n],
        };
        let corr: Vec<SilhouetteCorrespondence> = if lambdas.silh > 0.0 {
            find_silhouette_correspondences(&warped, frame.hand, frame.masks, frame.cams, cfg.gating_radius_px)
        } else {
            Vec::new()
        };
        log::debug!(
            "frame {} outer {outer}: {} contact targets, {} silhouette correspondences",
            frame.frame,
            targets.affected_count(),
            corr.len()
        );
        let inputs = EnergyInputs {
            rest: &rest.vertices,
            targets: Some(&targets),
            correspondences: &corr,
            cams: frame.cams,
            last: frame.last,
            lambdas,
        };
        gauss_newton(&mut graph, &inputs, cfg, &mut damping, outer, &mut trace);
        if damping > MAX_DAMPING {
            break;
        }
    }
    Ok(DeformResult {
        mesh: graph.warp(rest),
        graph,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deform::graph::build_graph;
    use crate::raster::{object_visible_mask, rasterize, Label};

    #[test]
    fn already_optimal_stays_put() {
        let m = TriMesh::icosphere(3, 60.0);
        let g = build_graph(&m, 20.0, 4).unwrap();
        let cam = CameraParams {
            id: 0,
            k: crate::geometry::Mat3::new(500.0, 0.0, 160.0, 0.0, 500.0, 120.0, 0.0, 0.0, 1.0),
            r: crate::geometry::Mat3::identity(),
            t: Vec3::new(0.0, 0.0, 600.0),
            width: 320,
            height: 240,
        };
        let mask = object_visible_mask(&rasterize(&[(&m, Label::Object)], &cam), 0);
        let cams = [cam];
        let masks = [mask];
        let f = DeformFrame {
            frame: 0,
            rest: &m,
            graph: g,
            hand: None,
            masks: &masks,
            cams: &cams,
            last: None,
        };
        let out = solve_deformation(&f, &DeformConfig::default()).unwrap();
        let drift = out
            .mesh
            .vertices
            .iter()
            .zip(&m.vertices)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(drift < 1e-4, "{drift}");
    }

    #[test]
    fn objective_never_increases() {
        let m = TriMesh::icosphere(3, 60.0);
        let g = build_graph(&m, 20.0, 4).unwrap();
        let hand = TriMesh::capsule(&Vec3::new(0.0, 0.0, 52.0), &Vec3::new(0.0, 0.0, 120.0), 10.0, 5, 12);
        let f = DeformFrame {
            frame: 0,
            rest: &m,
            graph: g,
            hand: Some(&hand),
            masks: &[],
            cams: &[],
            last: None,
        };
        let out = solve_deformation(&f, &DeformConfig::default()).unwrap();
        for w in out.trace.windows(2) {
            if w[0].outer == w[1].outer && w[1].accepted {
                assert!(w[1].energy.objective <= w[0].energy.objective);
            }
        }
        let before = crate::contact::intersection_volume(&m, &hand, 1.0).unwrap();
        let after = crate::contact::intersection_volume(&out.mesh, &hand, 1.0).unwrap();
        assert!(after < 0.5 * before, "{before} -> {after}");
        let again = solve_deformation(&f, &DeformConfig::default()).unwrap();
        assert_eq!(again.mesh.vertices, out.mesh.vertices);
    }
}
