//! Minimal Wavefront OBJ import/export (ASCII, `v` and `f` records).

use super::mesh::TriMesh;
use super::vec3::Vec3;
use crate::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

/// Parses an OBJ string. Faces may carry `v/vt/vn` slashes and polygons are
/// fan-triangulated. Indices are 1-based; negative indices count from the
/// end as usual.
pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let tag = parts.next().unwrap();
        match tag {
            "v" => {
                let mut coord = [0.0f64; 3];
                for c in &mut coord {
                    let tok = parts.next().ok_or_else(|| {
                        Error::Parse(format!("obj line {}: vertex needs 3 coordinates", lineno + 1))
                    })?;
                    *c = tok.parse().map_err(|_| {
                        Error::Parse(format!("obj line {}: bad coordinate `{tok}`", lineno + 1))
                    })?;
                }
                vertices.push(Vec3::new(coord[0], coord[1], coord[2]));
            }
            "f" => {
                let mut idx: Vec<u32> = Vec::new();
                for tok in parts {
                    let first = tok.split('/').next().unwrap_or("");
                    let v: i64 = first.parse().map_err(|_| {
                        Error::Parse(format!("obj line {}: bad face index `{tok}`", lineno + 1))
                    })?;
                    let resolved = if v > 0 {
                        v - 1
                    } else if v < 0 {
                        vertices.len() as i64 + v
                    } else {
                        return Err(Error::Parse(format!(
                            "obj line {}: face index 0 is invalid",
                            lineno + 1
                        )));
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(Error::Parse(format!(
                            "obj line {}: face index {v} out of range",
                            lineno + 1
                        )));
                    }
                    idx.push(resolved as u32);
                }
                if idx.len() < 3 {
                    return Err(Error::Parse(format!(
                        "obj line {}: face needs at least 3 vertices",
                        lineno + 1
                    )));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            // Normals, texcoords, groups, materials: ignored.
            _ => {}
        }
    }
    TriMesh::new(vertices, triangles)
}

/// Serializes a mesh to OBJ text. Uses shortest round-trip float formatting,
/// so writing and re-reading reproduces coordinates exactly.
pub fn write_obj(mesh: &TriMesh) -> String {
    let mut out = String::new();
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    for t in &mesh.triangles {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
    }
    out
}

pub fn load_obj(path: &Path) -> Result<TriMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Parse(format!("cannot read obj `{}`: {e}", path.display()))
    })?;
    parse_obj(&text)
}

pub fn save_obj(mesh: &TriMesh, path: &Path) -> Result<()> {
    std::fs::write(path, write_obj(mesh))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::make_icosphere;

    #[test]
    fn obj_round_trip_is_exact() {
        let m = make_icosphere(Vec3::new(0.123456789, -0.5, 2.0), 0.37, 2);
        let text = write_obj(&m);
        let back = parse_obj(&text).unwrap();
        assert_eq!(m.vertices.len(), back.vertices.len());
        assert_eq!(m.triangles, back.triangles);
        for (a, b) in m.vertices.iter().zip(back.vertices.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn parses_slashed_faces_and_quads() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3 4/4/4\n";
        let m = parse_obj(text).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn rejects_bad_indices() {
        assert!(parse_obj("v 0 0 0\nf 1 2 3\n").is_err());
        assert!(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 0\n").is_err());
    }
}
