//! Bounding-volume hierarchy over mesh triangles.

use crate::geometry::{closest_point_on_triangle, ray_triangle, Aabb, Vec3};
use crate::mesh::TriMesh;

const LEAF_SIZE: usize = 4;
/// Barycentric margin under which a hit counts as grazing an edge.
const GRAZE_EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf { start: usize, count: usize },
    Inner { left: usize, right: usize },
}

#[derive(Debug, Clone)]
struct Node {
    bbox: Aabb,
    kind: NodeKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub face: usize,
    pub point: Vec3,
    /// The hit lies within a tiny margin of a triangle edge or vertex.
    pub grazing: bool,
}

/// Median-split AABB tree over the triangles of one mesh. The tree stores
/// its own copy of the triangle corners and is immutable after building.
#[derive(Debug, Clone)]
pub struct AabbTree {
    nodes: Vec<Node>,
    order: Vec<usize>,
    tris: Vec<[Vec3; 3]>,
}

impl AabbTree {
    pub fn build(mesh: &TriMesh) -> AabbTree {
        let tris: Vec<[Vec3; 3]> = (0..mesh.faces.len()).map(|f| mesh.triangle(f)).collect();
        let boxes: Vec<Aabb> = tris.iter().map(|t| Aabb::from_points(t.iter())).collect();
        let centroids: Vec<Vec3> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut tree = AabbTree {
            nodes: Vec::new(),
            order: (0..tris.len()).collect(),
            tris,
        };
        if !tree.order.is_empty() {
            let n = tree.order.len();
            tree.build_node(0, n, &boxes, &centroids);
        }
        tree
    }

    fn build_node(&mut self, start: usize, end: usize, boxes: &[Aabb], centroids: &[Vec3]) -> usize {
        let slice = &mut self.order[start..end];
        let bbox = slice.iter().fold(Aabb::empty(), |b, &i| b.union(&boxes[i]));
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node {
                bbox,
                kind: NodeKind::Leaf {
                    start,
                    count: end - start,
                },
            });
            return id;
        }
        let cbox = Aabb::from_points(slice.iter().map(|&i| &centroids[i]));
        let axis = cbox.longest_axis();
        let mid = (end - start) / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b)));
        self.nodes.push(Node {
            bbox,
            kind: NodeKind::Leaf { start, count: 0 },
        });
        let left = self.build_node(start, start + mid, boxes, centroids);
        let right = self.build_node(start + mid, end, boxes, centroids);
        self.nodes[id].kind = NodeKind::Inner { left, right };
        id
    }

    pub fn triangle_count(&self) -> usize {
        self.tris.len()
    }

    pub fn bbox(&self) -> Aabb {
        self.nodes.first().map_or(Aabb::empty(), |n| n.bbox)
    }

    /// Checks the structural invariants: every triangle in exactly one leaf,
    /// leaves hold at most four triangles, parents contain their children.
    pub fn check_invariants(&self) -> bool {
        let mut seen = vec![0u32; self.tris.len()];
        for n in &self.nodes {
            match n.kind {
                NodeKind::Leaf { start, count } => {
                    if count > LEAF_SIZE {
                        return false;
                    }
                    for &f in &self.order[start..start + count] {
                        seen[f] += 1;
                        if !n.bbox.contains_box(&Aabb::from_points(self.tris[f].iter())) {
                            return false;
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    if !n.bbox.contains_box(&self.nodes[left].bbox) || !n.bbox.contains_box(&self.nodes[right].bbox) {
                        return false;
                    }
                }
            }
        }
        seen.iter().all(|&c| c == 1)
    }

    fn hit(&self, f: usize, o: &Vec3, d: &Vec3) -> Option<RayHit> {
        let [a, b, c] = &self.tris[f];
        ray_triangle(o, d, a, b, c).map(|(t, u, v)| RayHit {
            t,
            face: f,
            point: o + d * t,
            grazing: u < GRAZE_EPS || v < GRAZE_EPS || u + v > 1.0 - GRAZE_EPS,
        })
    }

    fn visit_ray(&self, o: &Vec3, d: &Vec3, mut t_max: impl FnMut() -> f64, mut on_hit: impl FnMut(RayHit)) {
        if self.nodes.is_empty() {
            return;
        }
        let inv = d.map(|x| 1.0 / x);
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let n = &self.nodes[id];
            if n.bbox.ray_entry(o, &inv, t_max()).is_none() {
                continue;
            }
            match n.kind {
                NodeKind::Leaf { start, count } => {
                    for &f in &self.order[start..start + count] {
                        if let Some(h) = self.hit(f, o, d) {
                            on_hit(h);
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
    }

    /// Nearest intersection with `t > 0`; ties broken by the lower face index.
    pub fn first_hit(&self, o: &Vec3, d: &Vec3) -> Option<RayHit> {
        let best = std::cell::Cell::new(None::<RayHit>);
        self.visit_ray(
            o,
            d,
            || best.get().map_or(f64::INFINITY, |h| h.t),
            |h| {
                let better = match best.get() {
                    None => true,
                    Some(b) => h.t < b.t || (h.t == b.t && h.face < b.face),
                };
                if better {
                    best.set(Some(h));
                }
            },
        );
        best.get()
    }

    /// Every intersection with `t > 0`, sorted by `t` then face.
    pub fn all_hits(&self, o: &Vec3, d: &Vec3) -> Vec<RayHit> {
        let mut hits = Vec::new();
        self.visit_ray(o, d, || f64::INFINITY, |h| hits.push(h));
        hits.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.face.cmp(&b.face)));
        hits
    }

    /// Closest surface point to `p` and its face.
    pub fn closest_point(&self, p: &Vec3) -> Option<(Vec3, usize)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(Vec3, usize, f64)> = None;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let n = &self.nodes[id];
            let bound = best.map_or(f64::INFINITY, |b| b.2);
            if n.bbox.distance_squared(p) > bound {
                continue;
            }
            match n.kind {
                NodeKind::Leaf { start, count } => {
                    for &f in &self.order[start..start + count] {
                        let [a, b, c] = &self.tris[f];
                        let q = closest_point_on_triangle(p, a, b, c);
                        let d2 = (q - p).norm_squared();
                        let better = match best {
                            None => true,
                            Some((_, bf, bd)) => d2 < bd || (d2 == bd && f < bf),
                        };
                        if better {
                            best = Some((q, f, d2));
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let dl = self.nodes[left].bbox.distance_squared(p);
                    let dr = self.nodes[right].bbox.distance_squared(p);
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best.map(|(q, f, _)| (q, f))
    }

    /// Ray-parity inside test against a closed mesh. Rays that graze an edge
    /// or start on the surface are retried along fixed jittered directions.
    pub fn contains(&self, p: &Vec3) -> bool {
        for d in PARITY_DIRECTIONS.iter() {
            let d = Vec3::new(d[0], d[1], d[2]).normalize();
            let hits = self.all_hits(p, &d);
            if hits.iter().any(|h| h.grazing || h.t < 1e-12) {
                continue;
            }
            return hits.len() % 2 == 1;
        }
        let d = Vec3::x();
        self.all_hits(p, &d).len() % 2 == 1
    }
}

const PARITY_DIRECTIONS: [[f64; 3]; 6] = [
    [1.0, 0.0, 0.0],
    [1.0, 1.3e-3, 0.7e-3],
    [1.0, -0.9e-3, 1.7e-3],
    [0.93, 0.31, -0.19],
    [-0.22, 0.87, 0.44],
    [0.35, -0.41, 0.84],
];
