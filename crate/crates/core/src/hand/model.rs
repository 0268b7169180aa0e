//! Rigged hand template: joint tree, rest pose, rest mesh and skinning weights.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point_segment_distance, Vec3};
use crate::io::obj::{load_mesh, save_mesh};
use crate::mesh::TriMesh;

#[derive(Debug, Clone, PartialEq)]
pub struct HandModel {
    /// Parent of each joint; `None` only for joint 0 (the wrist).
    pub parents: Vec<Option<usize>>,
    pub rest_joints: Vec<Vec3>,
    pub rest_mesh: TriMesh,
    /// Sparse `(joint, weight)` lists per rest-mesh vertex.
    pub weights: Vec<Vec<(usize, f64)>>,
    children: Vec<Vec<usize>>,
    articulated: Vec<usize>,
}

impl HandModel {
    pub fn new(
        parents: Vec<Option<usize>>,
        rest_joints: Vec<Vec3>,
        rest_mesh: TriMesh,
        weights: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self> {
        let j = parents.len();
        let bad = |m: String| Err(Error::InvalidHandModel(m));
        if j == 0 || rest_joints.len() != j {
            return bad(format!("{} parents but {} rest joints", j, rest_joints.len()));
        }
        if parents[0].is_some() {
            return bad("joint 0 must be the root".into());
        }
        for (c, p) in parents.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < c => {}
                Some(p) => return bad(format!("joint {c} has parent {p}; parents must precede children")),
                None => return bad(format!("joint {c} is a second root")),
            }
        }
        if weights.len() != rest_mesh.vertices.len() {
            return bad(format!(
                "{} weight lists for {} vertices",
                weights.len(),
                rest_mesh.vertices.len()
            ));
        }
        for (v, ws) in weights.iter().enumerate() {
            let mut sum = 0.0;
            for &(jt, w) in ws {
                if jt >= j {
                    return bad(format!("vertex {v} weighted to missing joint {jt}"));
                }
                if !(w >= 0.0) {
                    return bad(format!("vertex {v} has negative weight"));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return bad(format!("weights of vertex {v} sum to {sum}"));
            }
        }
        let mut children = vec![Vec::new(); j];
        for (c, p) in parents.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(c);
            }
        }
        let articulated = (1..j).filter(|&i| !children[i].is_empty()).collect();
        Ok(HandModel {
            parents,
            rest_joints,
            rest_mesh,
            weights,
            children,
            articulated,
        })
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn children(&self, j: usize) -> &[usize] {
        &self.children[j]
    }

    /// Non-root joints with children; each carries three pose parameters.
    pub fn articulated(&self) -> &[usize] {
        &self.articulated
    }

    /// Pose vector length: root rotation, root translation, articulated joints.
    pub fn parameter_count(&self) -> usize {
        6 + 3 * self.articulated.len()
    }

    /// Rest length of the bone ending at each joint (0 for the root).
    pub fn rest_bone_lengths(&self) -> Vec<f64> {
        self.parents
            .iter()
            .enumerate()
            .map(|(c, p)| p.map_or(0.0, |p| (self.rest_joints[c] - self.rest_joints[p]).norm()))
            .collect()
    }

    /// True if `a` is a proper ancestor of `j`.
    pub fn is_ancestor(&self, a: usize, mut j: usize) -> bool {
        while let Some(p) = self.parents[j] {
            if p == a {
                return true;
            }
            j = p;
        }
        false
    }

    /// A generic 21-joint right hand (wrist, then four joints for each of
    /// thumb, index, middle, ring and little finger) in millimetres, fingers
    /// along +x in the z = 0 plane. The mesh is a palm box plus one capsule
    /// per finger, all disjoint and closed.
    pub fn generic() -> HandModel {
        let p = |x: f64, y: f64| Vec3::new(x, y, 0.0);
        let rest_joints = vec![
            p(0.0, 0.0),
            // thumb
            p(20.0, -30.0),
            p(40.0, -52.0),
            p(58.0, -64.0),
            p(72.0, -72.0),
            // index
            p(85.0, -25.0),
            p(125.0, -25.0),
            p(150.0, -25.0),
            p(170.0, -25.0),
            // middle
            p(85.0, -2.0),
            p(118.0, 3.0),
            p(138.0, 6.0),
            p(153.0, 8.0),
            // ring
            p(82.0, 18.0),
            p(110.0, 26.0),
            p(127.0, 31.0),
            p(140.0, 35.0),
            // little
            p(80.0, 37.0),
            p(97.0, 46.0),
            p(110.0, 52.0),
            p(120.0, 56.0),
        ];
        let parents = vec![
            None,
            Some(0),
            Some(1),
            Some(2),
            Some(3),
            Some(0),
            Some(5),
            Some(6),
            Some(7),
            Some(0),
            Some(9),
            Some(10),
            Some(11),
            Some(0),
            Some(13),
            Some(14),
            Some(15),
            Some(0),
            Some(17),
            Some(18),
            Some(19),
        ];
        let mut parts = vec![TriMesh::cuboid(&Vec3::new(-5.0, -38.0, -11.0), &Vec3::new(70.0, 45.0, 11.0))];
        let mut part_bones: Vec<Vec<usize>> = vec![vec![0]];
        // (base joint of capsule, tip joint, radius, bones)
        let fingers: [(usize, usize, f64, [usize; 3]); 5] = [
            (2, 4, 8.0, [1, 2, 3]),
            (5, 8, 9.0, [5, 6, 7]),
            (9, 12, 9.0, [9, 10, 11]),
            (13, 16, 8.5, [13, 14, 15]),
            (17, 20, 7.5, [17, 18, 19]),
        ];
        for (base, tip, radius, bones) in fingers {
            parts.push(TriMesh::capsule(&rest_joints[base], &rest_joints[tip], radius, 6, 16));
            part_bones.push(bones.to_vec());
        }
        let mut weights = Vec::new();
        for (part, bones) in parts.iter().zip(&part_bones) {
            for v in &part.vertices {
                weights.push(inverse_distance_weights_among(v, &rest_joints, &parents, bones, 4));
            }
        }
        let mesh = TriMesh::merged(&parts);
        HandModel::new(parents, rest_joints, mesh, weights).expect("generic hand is valid")
    }
}

/// Distance from `v` to the bone(s) leaving joint `j`.
fn bone_distance(v: &Vec3, j: usize, joints: &[Vec3], children: &[Vec<usize>]) -> f64 {
    if children[j].is_empty() {
        return (v - joints[j]).norm();
    }
    children[j]
        .iter()
        .map(|&c| point_segment_distance(v, &joints[j], &joints[c]))
        .fold(f64::INFINITY, f64::min)
}

fn inverse_distance_weights_among(
    v: &Vec3,
    joints: &[Vec3],
    parents: &[Option<usize>],
    candidates: &[usize],
    nearest: usize,
) -> Vec<(usize, f64)> {
    let mut children = vec![Vec::new(); joints.len()];
    for (c, p) in parents.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(c);
        }
    }
    let mut d: Vec<(usize, f64)> = candidates
        .iter()
        .map(|&j| (j, bone_distance(v, j, joints, &children)))
        .collect();
    d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    d.truncate(nearest);
    let raw: Vec<(usize, f64)> = d.iter().map(|&(j, dist)| (j, 1.0 / dist.powi(2).max(1e-12))).collect();
    let total: f64 = raw.iter().map(|x| x.1).sum();
    raw.into_iter().map(|(j, w)| (j, w / total)).collect()
}

/// Fallback skinning weights: normalised `1/d^2` to the four nearest bones,
/// where a bone is the set of segments from a non-leaf joint to its children.
pub fn inverse_distance_weights(mesh: &TriMesh, joints: &[Vec3], parents: &[Option<usize>]) -> Vec<Vec<(usize, f64)>> {
    let mut has_child = vec![false; joints.len()];
    for p in parents.iter().flatten() {
        has_child[*p] = true;
    }
    let bones: Vec<usize> = (0..joints.len()).filter(|&j| has_child[j]).collect();
    mesh.vertices
        .iter()
        .map(|v| inverse_distance_weights_among(v, joints, parents, &bones, 4))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct HandModelFile {
    joints: usize,
    parents: Vec<i64>,
    rest_joints: Vec<f64>,
    rest_mesh: String,
    weights: Vec<(usize, usize, f64)>,
}

pub fn load_hand_model(path: &Path) -> Result<HandModel> {
    let f: HandModelFile = crate::io::read_json(path)?;
    if f.parents.len() != f.joints || f.rest_joints.len() != 3 * f.joints {
        return Err(Error::InvalidHandModel(format!(
            "{}: expected {} parents and {} rest coordinates",
            path.display(),
            f.joints,
            3 * f.joints
        )));
    }
    let parents = f
        .parents
        .iter()
        .map(|&p| if p < 0 { None } else { Some(p as usize) })
        .collect();
    let rest_joints = f.rest_joints.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
    let mesh_path = path.parent().unwrap_or(Path::new("")).join(&f.rest_mesh);
    let mesh = load_mesh(&mesh_path)?;
    let mut weights = vec![Vec::new(); mesh.vertices.len()];
    for (v, j, w) in f.weights {
        let slot = weights
            .get_mut(v)
            .ok_or_else(|| Error::InvalidHandModel(format!("weight for missing vertex {v}")))?;
        slot.push((j, w));
    }
    HandModel::new(parents, rest_joints, mesh, weights)
}

/// Writes `handmodel.json` and its rest mesh `mesh_name` next to it.
pub fn save_hand_model(path: &Path, model: &HandModel, mesh_name: &str) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new(""));
    save_mesh(&dir.join(mesh_name), &model.rest_mesh, Some("rest hand mesh"))?;
    let f = HandModelFile {
        joints: model.joint_count(),
        parents: model.parents.iter().map(|p| p.map_or(-1, |p| p as i64)).collect(),
        rest_joints: model.rest_joints.iter().flat_map(|v| [v.x, v.y, v.z]).collect(),
        rest_mesh: mesh_name.to_string(),
        weights: model
            .weights
            .iter()
            .enumerate()
            .flat_map(|(v, ws)| ws.iter().map(move |&(j, w)| (v, j, w)))
            .collect(),
    };
    crate::io::write_json(path, &f)
}
