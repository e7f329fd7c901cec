//! Indexed triangle meshes and procedural primitive builders.

use super::transform::{PlaneReflection, RigidTransform};
use super::vec3::Vec3;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::OnceLock;

/// Indexed triangle mesh. Vertices are world-frame meters; triangles are
/// counter-clockwise when viewed from outside (outward normals).
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    /// Optional per-vertex labels (e.g. annotated landmarks).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(skip)]
    watertight: OnceLock<bool>,
}

impl Clone for TriMesh {
    fn clone(&self) -> Self {
        TriMesh {
            vertices: self.vertices.clone(),
            triangles: self.triangles.clone(),
            labels: self.labels.clone(),
            watertight: OnceLock::new(),
        }
    }
}

impl TriMesh {
    /// Builds a mesh and validates indices and triangle degeneracy.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = TriMesh {
            vertices,
            triangles,
            labels: None,
            watertight: OnceLock::new(),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vertices.is_empty() || self.triangles.is_empty() {
            return Err(Error::Mesh("mesh has no vertices or no triangles".into()));
        }
        let n = self.vertices.len() as u32;
        for (i, t) in self.triangles.iter().enumerate() {
            for &v in t {
                if v >= n {
                    return Err(Error::Mesh(format!(
                        "triangle {i} references vertex {v} out of {n}"
                    )));
                }
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::Mesh(format!("triangle {i} repeats a vertex")));
            }
            let [a, b, c] = self.triangle(i);
            if (b - a).cross(c - a).norm() < 1e-14 {
                return Err(Error::Mesh(format!("triangle {i} is degenerate")));
            }
        }
        for v in &self.vertices {
            if !v.is_finite() {
                return Err(Error::Mesh("mesh has a non-finite vertex".into()));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[i];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// True when every directed edge is matched by exactly one reverse edge,
    /// i.e. the mesh is a closed orientable 2-manifold (possibly with
    /// multiple disjoint components).
    pub fn is_watertight(&self) -> bool {
        *self.watertight.get_or_init(|| {
            let mut edges: HashMap<(u32, u32), i64> = HashMap::new();
            for t in &self.triangles {
                for k in 0..3 {
                    let a = t[k];
                    let b = t[(k + 1) % 3];
                    *edges.entry((a.min(b), a.max(b))).or_insert(0) +=
                        if a < b { 1 } else { -1 };
                    // Count directed multiplicity separately via sign; a
                    // closed orientable surface balances to zero with
                    // exactly one edge in each direction.
                }
            }
            // Every undirected edge must have appeared exactly twice, once
            // per direction (balance 0). Re-scan to also catch edges used
            // more than twice.
            let mut counts: HashMap<(u32, u32), u32> = HashMap::new();
            for t in &self.triangles {
                for k in 0..3 {
                    let a = t[k];
                    let b = t[(k + 1) % 3];
                    *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
                }
            }
            edges.values().all(|&v| v == 0) && counts.values().all(|&c| c == 2)
        })
    }

    pub fn aabb(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for &v in &self.vertices {
            lo = lo.min_by_component(v);
            hi = hi.max_by_component(v);
        }
        (lo, hi)
    }

    /// Mean of the vertex positions.
    pub fn vertex_centroid(&self) -> Vec3 {
        let mut s = Vec3::default();
        for &v in &self.vertices {
            s += v;
        }
        s / self.vertices.len() as f64
    }

    /// Signed enclosed volume via the divergence theorem (m^3). Positive for
    /// outward-oriented watertight meshes.
    pub fn signed_volume(&self) -> f64 {
        let mut six_v = 0.0;
        for i in 0..self.triangles.len() {
            let [a, b, c] = self.triangle(i);
            six_v += a.dot(b.cross(c));
        }
        six_v / 6.0
    }

    pub fn apply_transform(&mut self, t: &RigidTransform) {
        for v in &mut self.vertices {
            *v = t.apply(*v);
        }
        self.watertight = OnceLock::new();
    }

    pub fn translate(&mut self, d: Vec3) {
        for v in &mut self.vertices {
            *v += d;
        }
        self.watertight = OnceLock::new();
    }

    /// Appends another mesh as a disjoint component.
    pub fn merge(&mut self, other: &TriMesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        self.watertight = OnceLock::new();
    }
}

/// Reflects a mesh across a vertical plane, flipping triangle winding so
/// outward normals stay outward.
pub fn mirror_mesh(mesh: &TriMesh, plane: &PlaneReflection) -> TriMesh {
    let vertices = mesh.vertices.iter().map(|&v| plane.reflect_point(v)).collect();
    let triangles = mesh
        .triangles
        .iter()
        .map(|t| [t[0], t[2], t[1]])
        .collect();
    TriMesh {
        vertices,
        triangles,
        labels: mesh.labels.clone(),
        watertight: OnceLock::new(),
    }
}

/// Axis-aligned box spanning `lo..hi`, outward-oriented.
pub fn make_box(lo: Vec3, hi: Vec3) -> TriMesh {
    let v = vec![
        Vec3::new(lo.x, lo.y, lo.z),
        Vec3::new(hi.x, lo.y, lo.z),
        Vec3::new(hi.x, hi.y, lo.z),
        Vec3::new(lo.x, hi.y, lo.z),
        Vec3::new(lo.x, lo.y, hi.z),
        Vec3::new(hi.x, lo.y, hi.z),
        Vec3::new(hi.x, hi.y, hi.z),
        Vec3::new(lo.x, hi.y, hi.z),
    ];
    let t = vec![
        // bottom (normal -z)
        [0, 2, 1],
        [0, 3, 2],
        // top (normal +z)
        [4, 5, 6],
        [4, 6, 7],
        // -y
        [0, 1, 5],
        [0, 5, 4],
        // +x
        [1, 2, 6],
        [1, 6, 5],
        // +y
        [2, 3, 7],
        [2, 7, 6],
        // -x
        [3, 0, 4],
        [3, 4, 7],
    ];
    TriMesh::new(v, t).expect("box construction is valid")
}

/// Box given center and full extents.
pub fn make_box_centered(center: Vec3, extents: Vec3) -> TriMesh {
    make_box(center - extents * 0.5, center + extents * 0.5)
}

/// Icosphere of radius `r` centered at `center` with `subdivisions` levels
/// (0 = icosahedron, 20 faces; each level quadruples the face count).
pub fn make_icosphere(center: Vec3, r: f64, subdivisions: u32) -> TriMesh {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = vec![
        Vec3::new(-1.0, phi, 0.0),
        Vec3::new(1.0, phi, 0.0),
        Vec3::new(-1.0, -phi, 0.0),
        Vec3::new(1.0, -phi, 0.0),
        Vec3::new(0.0, -1.0, phi),
        Vec3::new(0.0, 1.0, phi),
        Vec3::new(0.0, -1.0, -phi),
        Vec3::new(0.0, 1.0, -phi),
        Vec3::new(phi, 0.0, -1.0),
        Vec3::new(phi, 0.0, 1.0),
        Vec3::new(-phi, 0.0, -1.0),
        Vec3::new(-phi, 0.0, 1.0),
    ]
    .into_iter()
    .map(|v| v.normalized())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0u32; 3];
            for k in 0..3 {
                let a = f[k];
                let b = f[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                mid[k] = *midpoint.entry(key).or_insert_with(|| {
                    let m = ((verts[a as usize] + verts[b as usize]) * 0.5).normalized();
                    verts.push(m);
                    (verts.len() - 1) as u32
                });
            }
            next.push([f[0], mid[0], mid[2]]);
            next.push([f[1], mid[1], mid[0]]);
            next.push([f[2], mid[2], mid[1]]);
            next.push([mid[0], mid[1], mid[2]]);
        }
        faces = next;
    }
    let vertices = verts.into_iter().map(|v| center + v * r).collect();
    TriMesh::new(vertices, faces).expect("icosphere construction is valid")
}

/// Watertight L-shaped prism (an asymmetric test object). The L occupies the
/// union of `[0,w]x[0,d]` minus the open quadrant `(w/2,w]x(d/2,d]` in its
/// footprint, extruded to `h`, then centered on `center` at its base.
pub fn make_l_prism(center: Vec3, w: f64, d: f64, h: f64) -> TriMesh {
    // Hexagonal footprint, counter-clockwise viewed from +z.
    let fp = [
        (0.0, 0.0),
        (w, 0.0),
        (w, d / 2.0),
        (w / 2.0, d / 2.0),
        (w / 2.0, d),
        (0.0, d),
    ];
    let mut v: Vec<Vec3> = Vec::with_capacity(12);
    for &(x, y) in &fp {
        v.push(Vec3::new(x, y, 0.0));
    }
    for &(x, y) in &fp {
        v.push(Vec3::new(x, y, h));
    }
    let mut t: Vec<[u32; 3]> = Vec::new();
    // Fixed fan triangulation of the L hexagon (non-convex, so anchored at
    // the reflex-adjacent vertex 3).
    let cap = [[3u32, 5, 0], [3, 0, 1], [3, 1, 2], [3, 4, 5]];
    for c in cap {
        t.push([c[0], c[2], c[1]]); // bottom, wound downward
        t.push([c[0] + 6, c[1] + 6, c[2] + 6]); // top, wound upward
    }
    for k in 0..6u32 {
        let a = k;
        let b = (k + 1) % 6;
        t.push([a, b, b + 6]);
        t.push([a, b + 6, a + 6]);
    }
    let mut mesh = TriMesh::new(v, t).expect("L prism construction is valid");
    let offset = center - Vec3::new(w / 2.0, d / 2.0, 0.0);
    mesh.translate(offset);
    mesh
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_is_watertight_with_correct_volume() {
        let b = make_box(Vec3::new(-0.5, -1.0, 0.0), Vec3::new(0.5, 1.0, 2.0));
        assert!(b.is_watertight());
        assert!((b.signed_volume() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn icosphere_is_watertight_and_volume_approaches_sphere() {
        let s = make_icosphere(Vec3::new(0.1, 0.2, 0.3), 0.5, 3);
        assert!(s.is_watertight());
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 0.5_f64.powi(3);
        let got = s.signed_volume();
        assert!((got - exact).abs() / exact < 0.01, "volume {got} vs {exact}");
    }

    #[test]
    fn l_prism_is_watertight_with_expected_volume() {
        let l = make_l_prism(Vec3::new(0.0, 0.0, 0.0), 0.4, 0.4, 0.2);
        assert!(l.is_watertight());
        // Footprint area = full - removed quadrant = 0.16 - 0.04 = 0.12.
        assert!((l.signed_volume() - 0.12 * 0.2).abs() < 1e-12);
    }

    #[test]
    fn merged_components_stay_watertight() {
        let mut a = make_box_centered(Vec3::new(0.0, 0.0, 0.5), Vec3::new(1.0, 1.0, 1.0));
        let b = make_box_centered(Vec3::new(3.0, 0.0, 0.5), Vec3::new(1.0, 1.0, 1.0));
        a.merge(&b);
        assert!(a.is_watertight());
        assert!((a.signed_volume() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn open_surface_is_not_watertight() {
        let mut b = make_box_centered(Vec3::default(), Vec3::new(1.0, 1.0, 1.0));
        b.triangles.pop();
        let b = TriMesh::new(b.vertices, b.triangles).unwrap();
        assert!(!b.is_watertight());
    }

    #[test]
    fn mirror_preserves_volume_and_watertightness() {
        let l = make_l_prism(Vec3::new(0.3, -0.2, 0.0), 0.4, 0.3, 0.25);
        let plane = PlaneReflection::vertical(Vec3::new(1.0, 0.0, 0.0), Vec3::X);
        let m = mirror_mesh(&l, &plane);
        assert!(m.is_watertight());
        assert!((m.signed_volume() - l.signed_volume()).abs() < 1e-12);
        // Reflected twice lands back on the original.
        let mm = mirror_mesh(&m, &plane);
        for (a, b) in l.vertices.iter().zip(mm.vertices.iter()) {
            assert!(a.distance(*b) < 1e-12);
        }
    }
}
