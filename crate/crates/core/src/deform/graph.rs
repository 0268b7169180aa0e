//! Deformation graph: node sampling, vertex binding and the vertex warp.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use crate::contact::GeodesicGraph;
use crate::error::{Error, Result};
use crate::geometry::{Mat3, Vec3};
use crate::mesh::TriMesh;
use crate::par;

/// Parameters per node: `A` row-major, then `t`.
pub const NODE_PARAMS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeTransform {
    pub a: Mat3,
    pub t: Vec3,
}

impl NodeTransform {
    pub fn identity() -> Self {
        NodeTransform {
            a: Mat3::identity(),
            t: Vec3::zeros(),
        }
    }
}

/// Directed regularization edge: node `m`'s transform applied to node `n`,
/// weighted by `weight` = omega(g_n, g_m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegEdge {
    pub m: usize,
    pub n: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeformGraph {
    /// Node positions.
    pub nodes: Vec<Vec3>,
    /// Mesh vertex each node was sampled at.
    pub node_vertices: Vec<usize>,
    pub transforms: Vec<NodeTransform>,
    /// Per vertex: `(node, weight)`, weights summing to one.
    pub bindings: Vec<Vec<(usize, f64)>>,
    /// Nodes sharing at least one vertex, sorted, per node.
    pub neighbors: Vec<Vec<usize>>,
    pub reg_edges: Vec<RegEdge>,
}

#[derive(PartialEq)]
struct Label {
    dist: f64,
    vertex: usize,
    source: usize,
}

impl Eq for Label {}

impl Ord for Label {
    fn cmp(&self, o: &Self) -> Ordering {
        o.dist
            .total_cmp(&self.dist)
            .then(o.source.cmp(&self.source))
            .then(o.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Greedy geodesic farthest-point sampling; every new node is at least
/// `spacing` from all earlier ones.
fn farthest_point_sampling(graph: &GeodesicGraph, spacing: f64) -> Vec<usize> {
    let n = graph.vertex_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut chosen = Vec::new();
    let mut next = 0usize;
    loop {
        chosen.push(next);
        // Incremental Dijkstra lowering the distance-to-set field.
        let mut heap = BinaryHeap::new();
        dist[next] = 0.0;
        heap.push(Label {
            dist: 0.0,
            vertex: next,
            source: 0,
        });
        while let Some(Label { dist: d, vertex: v, .. }) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &(u, w) in graph.neighbors(v) {
                let nd = d + w;
                if nd < dist[u] {
                    dist[u] = nd;
                    heap.push(Label {
                        dist: nd,
                        vertex: u,
                        source: 0,
                    });
                }
            }
        }
        let (far, &fd) = dist
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty mesh");
        if fd < spacing {
            break;
        }
        next = far;
    }
    chosen
}

/// The `k` geodesically nearest sources of every vertex, sorted by distance.
fn k_nearest_sources(graph: &GeodesicGraph, sources: &[usize], k: usize) -> Vec<Vec<(usize, f64)>> {
    let n = graph.vertex_count();
    let mut labels: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut heap = BinaryHeap::new();
    for (s, &v) in sources.iter().enumerate() {
        heap.push(Label {
            dist: 0.0,
            vertex: v,
            source: s,
        });
    }
    while let Some(Label { dist: d, vertex: v, source: s }) = heap.pop() {
        let l = &mut labels[v];
        if l.len() >= k || l.iter().any(|x| x.0 == s) {
            continue;
        }
        l.push((s, d));
        for &(u, w) in graph.neighbors(v) {
            let lu = &labels[u];
            if lu.len() < k && !lu.iter().any(|x| x.0 == s) {
                heap.push(Label {
                    dist: d + w,
                    vertex: u,
                    source: s,
                });
            }
        }
    }
    labels
}

/// Builds the graph on `mesh`: nodes by farthest-point sampling at
/// `spacing`, each vertex bound to its `k` geodesically nearest nodes with
/// weights `(1 - G/G_{k+1})^2`, normalised.
pub fn build_graph(mesh: &TriMesh, spacing: f64, k: usize) -> Result<DeformGraph> {
    if !(spacing > 0.0) || k < 2 {
        return Err(Error::InvalidConfig(format!("node spacing {spacing} and K {k} must be positive and >= 2")));
    }
    if mesh.vertices.is_empty() {
        return Err(Error::InvalidMesh("cannot build a deformation graph on an empty mesh".into()));
    }
    mesh.check_watertight()?;
    let geo = GeodesicGraph::new(mesh);
    let node_vertices = farthest_point_sampling(&geo, spacing);
    if node_vertices.len() < k + 1 {
        return Err(Error::Graph(format!(
            "only {} nodes at spacing {spacing} mm; need at least {}; use a smaller spacing",
            node_vertices.len(),
            k + 1
        )));
    }
    let nearest = k_nearest_sources(&geo, &node_vertices, k + 1);
    let bindings: Vec<Vec<(usize, f64)>> = par::map_slice(&nearest, |near| {
        if near.is_empty() {
            return Vec::new();
        }
        let take = near.len().min(k);
        let dmax = if near.len() > k {
            near[k].1
        } else {
            near[take - 1].1 * 1.0001 + 1e-9
        };
        let raw: Vec<(usize, f64)> = near[..take]
            .iter()
            .map(|&(s, d)| (s, if dmax > 0.0 { (1.0 - d / dmax).max(0.0).powi(2) } else { 1.0 }))
            .collect();
        let total: f64 = raw.iter().map(|x| x.1).sum();
        if total > 0.0 {
            raw.into_iter().map(|(s, w)| (s, w / total)).collect()
        } else {
            raw.iter().map(|&(s, _)| (s, 1.0 / take as f64)).collect()
        }
    });
    if let Some(v) = bindings.iter().position(|b| b.is_empty()) {
        return Err(Error::Graph(format!("vertex {v} is not reachable from any node")));
    }
    let nodes: Vec<Vec3> = node_vertices.iter().map(|&v| mesh.vertices[v]).collect();
    let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nodes.len()];
    for b in &bindings {
        for &(a, _) in b {
            for &(c, _) in b {
                if a != c {
                    sets[a].insert(c);
                }
            }
        }
    }
    let neighbors: Vec<Vec<usize>> = sets.into_iter().map(|s| s.into_iter().collect()).collect();
    let mut graph = DeformGraph {
        transforms: vec![NodeTransform::identity(); nodes.len()],
        nodes,
        node_vertices,
        bindings,
        neighbors,
        reg_edges: Vec::new(),
    };
    graph.reg_edges = reg_edges(&graph.nodes, &graph.neighbors, spacing);
    Ok(graph)
}

/// omega(g_n, g_m): Gaussian in the node distance with width `spacing`,
/// normalised over the neighbours of `n`.
fn reg_edges(nodes: &[Vec3], neighbors: &[Vec<usize>], spacing: f64) -> Vec<RegEdge> {
    let mut weight_of = vec![Vec::new(); nodes.len()];
    for (n, nb) in neighbors.iter().enumerate() {
        let raw: Vec<f64> = nb
            .iter()
            .map(|&m| (-(nodes[n] - nodes[m]).norm_squared() / (2.0 * spacing * spacing)).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        weight_of[n] = raw.iter().map(|w| w / total).collect();
    }
    let mut edges = Vec::new();
    for (m, nb) in neighbors.iter().enumerate() {
        for &n in nb {
            let pos = neighbors[n].binary_search(&m).expect("neighbour lists are symmetric");
            edges.push(RegEdge {
                m,
                n,
                weight: weight_of[n][pos],
            });
        }
    }
    edges
}

impl DeformGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn parameter_count(&self) -> usize {
        NODE_PARAMS * self.nodes.len()
    }

    /// The same graph on a rigidly moved copy of its mesh, transforms reset.
    pub fn posed(&self, r: &Mat3, t: &Vec3) -> DeformGraph {
        DeformGraph {
            nodes: self.nodes.iter().map(|g| r * g + t).collect(),
            transforms: vec![NodeTransform::identity(); self.nodes.len()],
            ..self.clone()
        }
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for tr in &self.transforms {
            for i in 0..3 {
                for j in 0..3 {
                    out.push(tr.a[(i, j)]);
                }
            }
            out.extend(tr.t.iter());
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) {
        for (s, tr) in self.transforms.iter_mut().enumerate() {
            let b = &p[NODE_PARAMS * s..NODE_PARAMS * (s + 1)];
            tr.a = Mat3::from_row_slice(&b[..9]);
            tr.t = Vec3::new(b[9], b[10], b[11]);
        }
    }

    /// Warped position of one rest vertex, written as a displacement so the
    /// identity transforms reproduce it exactly.
    #[inline]
    pub fn warp_point(&self, vertex: usize, v: &Vec3) -> Vec3 {
        let mut d = Vec3::zeros();
        for &(s, w) in &self.bindings[vertex] {
            let tr = &self.transforms[s];
            d += w * ((tr.a - Mat3::identity()) * (v - self.nodes[s]) + tr.t);
        }
        v + d
    }

    pub fn warp_vertices(&self, rest: &[Vec3]) -> Vec<Vec3> {
        par::map_range(rest.len(), |i| self.warp_point(i, &rest[i]))
    }

    /// Applies the warp to a mesh with the graph's topology.
    pub fn warp(&self, mesh: &TriMesh) -> TriMesh {
        mesh.with_vertices(self.warp_vertices(&mesh.vertices))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation_from_axis_angle;

    #[test]
    fn sampling_respects_spacing() {
        let m = TriMesh::icosphere(4, 100.0);
        let g = build_graph(&m, 50.0, 4).unwrap();
        assert!((20..=60).contains(&g.node_count()), "{}", g.node_count());
        let geo = GeodesicGraph::new(&m);
        for (i, &a) in g.node_vertices.iter().enumerate() {
            let d = geo.distances(&[a]);
            for &b in &g.node_vertices[i + 1..] {
                assert!(d[b] >= 50.0);
            }
        }
    }

    #[test]
    fn bindings_and_edges() {
        let m = TriMesh::icosphere(3, 60.0);
        let g = build_graph(&m, 20.0, 4).unwrap();
        for b in &g.bindings {
            let s: f64 = b.iter().map(|x| x.1).sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(b.iter().all(|x| x.1 >= 0.0));
            assert!(b.len() <= 4);
        }
        let mut used = vec![false; g.node_count()];
        for b in &g.bindings {
            for &(s, w) in b {
                if w > 0.0 {
                    used[s] = true;
                }
            }
        }
        assert!(used.iter().all(|&u| u));
        assert!(!g.reg_edges.is_empty());
        for (a, nb) in g.neighbors.iter().enumerate() {
            for &b in nb {
                assert!(g.neighbors[b].contains(&a));
            }
        }
    }

    #[test]
    fn too_few_nodes_is_an_error() {
        let m = TriMesh::icosphere(2, 10.0);
        assert!(matches!(build_graph(&m, 500.0, 4), Err(Error::Graph(_))));
    }

    #[test]
    fn identity_and_rigid_closure() {
        let m = TriMesh::icosphere(3, 60.0);
        let mut g = build_graph(&m, 20.0, 4).unwrap();
        assert_eq!(g.warp(&m).vertices, m.vertices);
        let r = rotation_from_axis_angle(&Vec3::new(0.4, -0.3, 0.9));
        let t = Vec3::new(12.0, -7.0, 3.0);
        for (s, tr) in g.transforms.iter_mut().enumerate() {
            tr.a = r;
            tr.t = t + (r - Mat3::identity()) * g.nodes[s];
        }
        let w = g.warp(&m);
        for (a, v) in w.vertices.iter().zip(&m.vertices) {
            assert!((a - (r * v + t)).norm() < 1e-9);
        }
    }

    #[test]
    fn single_node_translation_is_linear() {
        let m = TriMesh::icosphere(3, 60.0);
        let mut g = build_graph(&m, 20.0, 4).unwrap();
        g.transforms[3].t = Vec3::new(5.0, 0.0, 0.0);
        let w = g.warp(&m);
        for (i, b) in g.bindings.iter().enumerate() {
            let wt = b.iter().find(|x| x.0 == 3).map_or(0.0, |x| x.1);
            assert!((w.vertices[i] - m.vertices[i] - Vec3::new(5.0 * wt, 0.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn params_round_trip() {
        let m = TriMesh::icosphere(2, 60.0);
        let mut g = build_graph(&m, 30.0, 4).unwrap();
        let p: Vec<f64> = (0..g.parameter_count()).map(|i| i as f64 * 0.5).collect();
        g.set_params(&p);
        assert_eq!(g.params(), p);
    }
}
