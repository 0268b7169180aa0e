//! The deformation energy: residual blocks with analytic Jacobians for the
//! contact, silhouette, temporal, rigidity and regularization terms.

use nalgebra::SMatrix;
use serde::Serialize;

use super::correspond::SilhouetteCorrespondence;
use super::graph::DeformGraph;
use super::Lambdas;
use crate::contact::ContactTargets;
use crate::geometry::{Mat3, Vec3};
use crate::io::camera::CameraParams;
use crate::par;

/// Jacobian of a residual (up to three rows) with respect to one node's
/// twelve parameters.
pub type NodeJac = SMatrix<f64, 3, 12>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Term {
    Cont,
    Silh,
    Temp,
    Rigid,
    Reg,
}

pub const TERMS: [Term; 5] = [Term::Cont, Term::Silh, Term::Temp, Term::Rigid, Term::Reg];

impl Term {
    pub fn name(&self) -> &'static str {
        match self {
            Term::Cont => "cont",
            Term::Silh => "silh",
            Term::Temp => "temp",
            Term::Rigid => "rigid",
            Term::Reg => "reg",
        }
    }
}

/// One residual vector. The solver minimises `lambda * |value|^2`; the
/// reported term value is `scale * |value|` (or `|value|^2` for rigidity).
#[derive(Debug, Clone)]
pub struct Residual {
    pub term: Term,
    pub dim: usize,
    pub value: Vec3,
    pub scale: f64,
    pub blocks: Vec<(usize, NodeJac)>,
}

/// Everything the energy needs besides the graph parameters.
#[derive(Debug, Clone, Copy)]
pub struct EnergyInputs<'a> {
    /// Rigidly posed template vertices.
    pub rest: &'a [Vec3],
    pub targets: Option<&'a ContactTargets>,
    pub correspondences: &'a [SilhouetteCorrespondence],
    pub cams: &'a [CameraParams],
    /// Previous frame's deformed vertices carried through the current pose.
    pub last: Option<&'a [Vec3]>,
    pub lambdas: Lambdas,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub cont: f64,
    pub silh: f64,
    pub temp: f64,
    pub rigid: f64,
    pub reg: f64,
    /// Lambda-weighted sum of the five reported terms.
    pub total: f64,
    /// Lambda-weighted sum of squared residual norms, the quantity minimised.
    pub objective: f64,
}

impl EnergyBreakdown {
    pub fn get(&self, t: Term) -> f64 {
        match t {
            Term::Cont => self.cont,
            Term::Silh => self.silh,
            Term::Temp => self.temp,
            Term::Rigid => self.rigid,
            Term::Reg => self.reg,
        }
    }

    fn add(&mut self, t: Term, v: f64) {
        match t {
            Term::Cont => self.cont += v,
            Term::Silh => self.silh += v,
            Term::Temp => self.temp += v,
            Term::Rigid => self.rigid += v,
            Term::Reg => self.reg += v,
        }
    }
}

/// `d warp(v) / d params` of one vertex, per bound node.
fn vertex_jacobian(graph: &DeformGraph, vertex: usize, v: &Vec3) -> Vec<(usize, NodeJac)> {
    graph.bindings[vertex]
        .iter()
        .map(|&(s, w)| {
            let d = v - graph.nodes[s];
            let mut j = NodeJac::zeros();
            for r in 0..3 {
                for c in 0..3 {
                    j[(r, 3 * r + c)] = w * d[c];
                }
                j[(r, 9 + r)] = w;
            }
            (s, j)
        })
        .collect()
}

fn point_residual(term: Term, graph: &DeformGraph, vertex: usize, rest: &Vec3, target: &Vec3, jac: bool) -> Residual {
    Residual {
        term,
        dim: 3,
        value: graph.warp_point(vertex, rest) - target,
        scale: 1.0,
        blocks: if jac { vertex_jacobian(graph, vertex, rest) } else { Vec::new() },
    }
}

fn silhouette_residual(graph: &DeformGraph, inputs: &EnergyInputs, c: &SilhouetteCorrespondence, jac: bool) -> Option<Residual> {
    let cam = inputs.cams.iter().find(|k| k.id == c.view)?;
    let rest = &inputs.rest[c.vertex];
    let p = graph.warp_point(c.vertex, rest);
    let (uv, dp) = cam.project_with_jacobian(&p)?;
    let r = uv - c.target;
    let blocks = if jac {
        vertex_jacobian(graph, c.vertex, rest)
            .into_iter()
            .map(|(s, j)| {
                let top = dp * j;
                let mut out = NodeJac::zeros();
                out.fixed_view_mut::<2, 12>(0, 0).copy_from(&top);
                (s, out)
            })
            .collect()
    } else {
        Vec::new()
    };
    Some(Residual {
        term: Term::Silh,
        dim: 2,
        value: Vec3::new(r.x, r.y, 0.0),
        scale: 1.0,
        blocks,
    })
}

/// Column orthogonality and unit column norms of `A_s`.
fn rigid_residuals(s: usize, a: &Mat3, jac: bool) -> [Residual; 2] {
    let col = |j: usize| a.column(j).into_owned();
    let (a1, a2, a3) = (col(0), col(1), col(2));
    let pairs = [(0usize, 1usize), (0, 2), (1, 2)];
    let mut jo = NodeJac::zeros();
    let mut ju = NodeJac::zeros();
    if jac {
        for (row, &(j, k)) in pairs.iter().enumerate() {
            for i in 0..3 {
                jo[(row, 3 * i + j)] += a[(i, k)];
                jo[(row, 3 * i + k)] += a[(i, j)];
            }
        }
        for j in 0..3 {
            for i in 0..3 {
                ju[(j, 3 * i + j)] = -2.0 * a[(i, j)];
            }
        }
    }
    let blocks = |m: NodeJac| if jac { vec![(s, m)] } else { Vec::new() };
    [
        Residual {
            term: Term::Rigid,
            dim: 3,
            value: Vec3::new(a1.dot(&a2), a1.dot(&a3), a2.dot(&a3)),
            scale: 1.0,
            blocks: blocks(jo),
        },
        Residual {
            term: Term::Rigid,
            dim: 3,
            value: Vec3::new(1.0 - a1.dot(&a1), 1.0 - a2.dot(&a2), 1.0 - a3.dot(&a3)),
            scale: 1.0,
            blocks: blocks(ju),
        },
    ]
}

fn reg_residual(graph: &DeformGraph, e: &super::graph::RegEdge, jac: bool) -> Residual {
    let sw = e.weight.sqrt();
    let (tm, tn) = (&graph.transforms[e.m], &graph.transforms[e.n]);
    let d = graph.nodes[e.n] - graph.nodes[e.m];
    let value = sw * ((tm.a - Mat3::identity()) * d + tm.t - tn.t);
    let blocks = if jac {
        let mut jm = NodeJac::zeros();
        let mut jn = NodeJac::zeros();
        for r in 0..3 {
            for c in 0..3 {
                jm[(r, 3 * r + c)] = sw * d[c];
            }
            jm[(r, 9 + r)] = sw;
            jn[(r, 9 + r)] = -sw;
        }
        vec![(e.m, jm), (e.n, jn)]
    } else {
        Vec::new()
    };
    Residual {
        term: Term::Reg,
        dim: 3,
        value,
        scale: sw,
        blocks,
    }
}

/// Residuals of one term; terms with zero weight or no data are empty.
pub fn term_residuals(graph: &DeformGraph, inputs: &EnergyInputs, term: Term, jac: bool) -> Vec<Residual> {
    if inputs.lambdas.get(term) == 0.0 {
        return Vec::new();
    }
    match term {
        Term::Cont => {
            let Some(t) = inputs.targets else { return Vec::new() };
            let idx: Vec<usize> = (0..t.affected.len()).filter(|&i| t.affected[i]).collect();
            par::map_slice(&idx, |&i| point_residual(Term::Cont, graph, i, &inputs.rest[i], &t.targets[i], jac))
        }
        Term::Silh => par::map_slice(inputs.correspondences, |c| silhouette_residual(graph, inputs, c, jac))
            .into_iter()
            .flatten()
            .collect(),
        Term::Temp => {
            let Some(last) = inputs.last else { return Vec::new() };
            par::map_range(inputs.rest.len(), |i| point_residual(Term::Temp, graph, i, &inputs.rest[i], &last[i], jac))
        }
        Term::Rigid => par::map_range(graph.node_count(), |s| rigid_residuals(s, &graph.transforms[s].a, jac))
            .into_iter()
            .flatten()
            .collect(),
        Term::Reg => par::map_slice(&graph.reg_edges, |e| reg_residual(graph, e, jac)),
    }
}

pub fn all_residuals(graph: &DeformGraph, inputs: &EnergyInputs, jac: bool) -> Vec<Residual> {
    TERMS
        .iter()
        .flat_map(|&t| term_residuals(graph, inputs, t, jac))
        .collect()
}

/// Reported term values, their weighted total and the solver objective.
pub fn energy(graph: &DeformGraph, inputs: &EnergyInputs) -> EnergyBreakdown {
    breakdown(&all_residuals(graph, inputs, false), &inputs.lambdas)
}

pub fn breakdown(residuals: &[Residual], lambdas: &Lambdas) -> EnergyBreakdown {
    let mut out = EnergyBreakdown::default();
    for r in residuals {
        let sq = r.value.norm_squared();
        let reported = match r.term {
            Term::Rigid => sq,
            _ => r.scale * sq.sqrt(),
        };
        out.add(r.term, reported);
        out.objective += lambdas.get(r.term) * sq;
    }
    out.total = TERMS.iter().map(|&t| lambdas.get(t) * out.get(t)).sum();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deform::graph::{build_graph, NODE_PARAMS};
    use crate::geometry::rotation_from_axis_angle;
    use crate::mesh::TriMesh;

    fn small_graph() -> (TriMesh, DeformGraph) {
        let m = TriMesh::icosphere(2, 40.0);
        let g = build_graph(&m, 25.0, 4).unwrap();
        assert!(g.node_count() <= 30);
        (m, g)
    }

    fn inputs<'a>(m: &'a TriMesh, last: Option<&'a [Vec3]>) -> EnergyInputs<'a> {
        EnergyInputs {
            rest: &m.vertices,
            targets: None,
            correspondences: &[],
            cams: &[],
            last,
            lambdas: Lambdas::default(),
        }
    }

    #[test]
    fn identity_energy_is_zero() {
        let (m, g) = small_graph();
        let e = energy(&g, &inputs(&m, Some(&m.vertices)));
        assert_eq!(e.total, 0.0);
        assert_eq!(e.objective, 0.0);
    }

    #[test]
    fn rigid_term_values() {
        let (m, mut g) = small_graph();
        for (i, tr) in g.transforms.iter_mut().enumerate() {
            tr.a = rotation_from_axis_angle(&Vec3::new(0.3 * i as f64, -0.2, 0.7));
        }
        assert!(energy(&g, &inputs(&m, None)).rigid < 1e-24);
        g.transforms[2].a = Mat3::identity() * 2.0;
        let e = energy(&g, &inputs(&m, None));
        assert!((e.rigid - 27.0).abs() < 1e-9);
    }

    #[test]
    fn reg_two_node_hand_evaluation() {
        let (m, mut g) = small_graph();
        let t = Vec3::new(1.0, -2.0, 2.0);
        g.transforms[5].t = t;
        let e = energy(&g, &inputs(&m, None));
        let mut expect = 0.0;
        for &n in &g.neighbors[5] {
            let w_nm = g.reg_edges.iter().find(|e| e.m == 5 && e.n == n).unwrap().weight;
            let w_mn = g.reg_edges.iter().find(|e| e.m == n && e.n == 5).unwrap().weight;
            expect += w_nm * t.norm() + w_mn * t.norm();
        }
        assert!((e.reg - expect).abs() < 1e-12);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        use crate::contact::ContactTargets;
        use crate::deform::correspond::SilhouetteCorrespondence;
        use crate::geometry::Vec2;
        let (m, mut g) = small_graph();
        for (i, tr) in g.transforms.iter_mut().enumerate() {
            let f = i as f64;
            tr.a = rotation_from_axis_angle(&Vec3::new(0.05 * f, -0.1, 0.2)) * (1.0 + 0.01 * f);
            tr.a[(0, 1)] += 0.03;
            tr.t = Vec3::new(0.5 * f, -0.3, 0.2 * f);
        }
        let n = m.vertices.len();
        let targets = ContactTargets {
            targets: m.vertices.iter().map(|v| v * 0.9).collect(),
            affected: (0..n).map(|v| v % 3 == 0).collect(),
            penetrating: vec![false; n],
        };
        let cam = CameraParams {
            id: 0,
            k: Mat3::new(500.0, 0.0, 160.0, 0.0, 500.0, 120.0, 0.0, 0.0, 1.0),
            r: rotation_from_axis_angle(&Vec3::new(0.2, 0.1, 0.0)),
            t: Vec3::new(0.0, 0.0, 400.0),
            width: 320,
            height: 240,
        };
        let cams = [cam];
        let corr: Vec<SilhouetteCorrespondence> = (0..n)
            .step_by(5)
            .map(|v| SilhouetteCorrespondence {
                vertex: v,
                view: 0,
                target: Vec2::new(150.0 + v as f64, 110.0),
            })
            .collect();
        let last: Vec<Vec3> = m.vertices.iter().map(|v| v + Vec3::new(1.0, 0.0, -1.0)).collect();
        let inp = EnergyInputs {
            rest: &m.vertices,
            targets: Some(&targets),
            correspondences: &corr,
            cams: &cams,
            last: Some(&last),
            lambdas: Lambdas::default(),
        };
        let h = 1e-6;
        for term in TERMS {
            let base = term_residuals(&g, &inp, term, true);
            assert!(!base.is_empty(), "{}", term.name());
            let p0 = g.params();
            for k in 0..p0.len() {
                let (node, col) = (k / NODE_PARAMS, k % NODE_PARAMS);
                let mut gp = g.clone();
                let mut gm = g.clone();
                let mut pp = p0.clone();
                let mut pm = p0.clone();
                pp[k] += h;
                pm[k] -= h;
                gp.set_params(&pp);
                gm.set_params(&pm);
                let rp = term_residuals(&gp, &inp, term, false);
                let rm = term_residuals(&gm, &inp, term, false);
                for (i, r) in base.iter().enumerate() {
                    let fd = (rp[i].value - rm[i].value) / (2.0 * h);
                    let an = r
                        .blocks
                        .iter()
                        .filter(|(b, _)| *b == node)
                        .fold(Vec3::zeros(), |acc, (_, j)| acc + j.column(col));
                    let err = (fd - an).norm();
                    assert!(err <= 1e-4 * (1.0 + an.norm()), "{} node {node} col {col}: {fd} vs {an}", term.name());
                }
            }
        }
    }
}
