//! Wavefront OBJ restricted to `v` and `f` records.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mesh::TriMesh;

pub fn parse_obj(text: &str, path: &Path) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut ignored = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for c in &mut xyz {
                    *c = tok
                        .next()
                        .and_then(|s| s.parse::<f64>().ok())
                        .ok_or_else(|| Error::parse(path, format!("bad vertex at line {line_no}")))?;
                }
                vertices.push(Vec3::from(xyz));
            }
            Some("f") => {
                let idx: Vec<&str> = tok.collect();
                if idx.len() != 3 {
                    return Err(Error::parse(path, format!("non-triangular face at line {line_no}")));
                }
                let mut f = [0usize; 3];
                for (slot, s) in f.iter_mut().zip(idx) {
                    let first = s.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| Error::parse(path, format!("bad face index at line {line_no}")))?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        -1
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(Error::parse(
                            path,
                            format!("out-of-range vertex index {i} at line {line_no}"),
                        ));
                    }
                    *slot = resolved as usize;
                }
                faces.push(f);
            }
            Some(_) => ignored += 1,
            None => {}
        }
    }
    if ignored > 0 {
        log::warn!("{}: ignored {ignored} non-geometry records", path.display());
    }
    TriMesh::new(vertices, faces).map_err(|e| Error::parse(path, e))
}

/// Reads an OBJ file; faces become zero-indexed and normals are recomputed.
pub fn load_mesh(path: &Path) -> Result<TriMesh> {
    let text = super::read_string(path)?;
    parse_obj(&text, path)
}

pub fn obj_string(mesh: &TriMesh, header: Option<&str>) -> String {
    let mut s = String::with_capacity(mesh.vertices.len() * 40 + mesh.faces.len() * 20);
    if let Some(h) = header {
        for l in h.lines() {
            let _ = writeln!(s, "# {l}");
        }
    }
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn save_mesh(path: &Path, mesh: &TriMesh, header: Option<&str>) -> Result<()> {
    super::write_bytes(path, obj_string(mesh, header).as_bytes())
}
