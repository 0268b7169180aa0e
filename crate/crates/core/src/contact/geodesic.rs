//! Shortest-path geodesic distances on triangle meshes.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use crate::mesh::TriMesh;

#[derive(PartialEq)]
struct Entry {
    dist: f64,
    vertex: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        o.dist.total_cmp(&self.dist).then(o.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Mesh edge graph augmented with the diagonal across every interior edge
/// (the two vertices opposite a shared edge), weighted by Euclidean length.
#[derive(Debug, Clone)]
pub struct GeodesicGraph {
    adj: Vec<Vec<(usize, f64)>>,
}

impl GeodesicGraph {
    pub fn new(mesh: &TriMesh) -> GeodesicGraph {
        let n = mesh.vertices.len();
        let mut opposite: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for f in &mesh.faces {
            for k in 0..3 {
                let (a, b, c) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
                opposite.entry((a.min(b), a.max(b))).or_default().push(c);
            }
        }
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for (&(a, b), opp) in &opposite {
            pairs.push((a, b));
            if opp.len() == 2 && opp[0] != opp[1] {
                pairs.push((opp[0].min(opp[1]), opp[0].max(opp[1])));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let mut adj = vec![Vec::new(); n];
        for (a, b) in pairs {
            if a == b {
                continue;
            }
            let w = (mesh.vertices[a] - mesh.vertices[b]).norm();
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        GeodesicGraph { adj }
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adj[v]
    }

    /// Multi-source distances; unreachable vertices are `+inf`.
    pub fn distances(&self, sources: &[usize]) -> Vec<f64> {
        let d = self.distances_bounded(sources, f64::INFINITY);
        let unreachable = d.iter().filter(|x| x.is_infinite()).count();
        if unreachable > 0 {
            log::warn!("{unreachable} vertices unreachable from geodesic sources");
        }
        d
    }

    /// Distances up to `max_dist`; vertices farther away stay `+inf`.
    pub fn distances_bounded(&self, sources: &[usize], max_dist: f64) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.adj.len()];
        let mut heap = BinaryHeap::new();
        for &s in sources {
            if s < dist.len() && dist[s] > 0.0 {
                dist[s] = 0.0;
                heap.push(Entry { dist: 0.0, vertex: s });
            }
        }
        while let Some(Entry { dist: d, vertex: v }) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &(u, w) in &self.adj[v] {
                let nd = d + w;
                if nd < dist[u] && nd <= max_dist {
                    dist[u] = nd;
                    heap.push(Entry { dist: nd, vertex: u });
                }
            }
        }
        dist
    }

    /// Vertices within `max_dist` of `source` with their distances, in the
    /// order they were settled.
    pub fn neighborhood(&self, source: usize, max_dist: f64) -> Vec<(usize, f64)> {
        let mut dist: HashMap<usize, f64> = HashMap::new();
        let mut settled = Vec::new();
        let mut heap = BinaryHeap::new();
        dist.insert(source, 0.0);
        heap.push(Entry { dist: 0.0, vertex: source });
        while let Some(Entry { dist: d, vertex: v }) = heap.pop() {
            if d > dist[&v] {
                continue;
            }
            settled.push((v, d));
            for &(u, w) in &self.adj[v] {
                let nd = d + w;
                if nd <= max_dist && dist.get(&u).is_none_or(|&old| nd < old) {
                    dist.insert(u, nd);
                    heap.push(Entry { dist: nd, vertex: u });
                }
            }
        }
        settled
    }
}

/// Geodesic distance from the nearest of `sources` to every vertex.
pub fn geodesic_distances(mesh: &TriMesh, sources: &[usize]) -> Vec<f64> {
    GeodesicGraph::new(mesh).distances(sources)
}
