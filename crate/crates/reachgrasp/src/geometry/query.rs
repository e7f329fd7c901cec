//! Mesh queries: ray casts, inside tests, signed distance, closest points.

use super::bvh::AccelIndex;
use super::mesh::TriMesh;
use super::ray::{HitRecord, Ray};
use super::vec3::Vec3;
use crate::{Error, Result};

/// A mesh bundled with its acceleration index.
#[derive(Debug, Clone)]
pub struct IndexedMesh {
    pub mesh: TriMesh,
    pub accel: AccelIndex,
}

impl IndexedMesh {
    pub fn new(mesh: TriMesh) -> Self {
        let accel = AccelIndex::build(&mesh);
        IndexedMesh { mesh, accel }
    }

    /// Nearest hit along `ray`, if any.
    pub fn ray_cast(&self, ray: &Ray) -> Option<HitRecord> {
        self.accel.first_hit(&self.mesh, ray)
    }

    /// All hits sorted by distance.
    pub fn ray_cast_all(&self, ray: &Ray) -> Vec<HitRecord> {
        self.accel.all_hits(&self.mesh, ray)
    }

    /// True when the open segment `(a, b)` crosses the surface.
    pub fn segment_intersects(&self, a: Vec3, b: Vec3) -> bool {
        let d = b - a;
        let len = d.norm();
        if len < 1e-9 {
            return false;
        }
        let ray = Ray::new(a, d / len, len - 1e-7);
        self.ray_cast(&ray).is_some()
    }

    /// Closest point on the surface to `p`.
    pub fn closest_surface_point(&self, p: Vec3) -> Vec3 {
        self.accel.closest_point(&self.mesh, p).0
    }

    /// Unsigned distance from `p` to the surface.
    pub fn unsigned_distance(&self, p: Vec3) -> f64 {
        self.closest_surface_point(p).distance(p)
    }

    /// Parity-based inside test. Requires a watertight mesh.
    ///
    /// Casts along a fixed list of generic directions; if a crossing is
    /// suspiciously close to a triangle edge (where parity counting can
    /// double-count), the next direction is tried. The direction list is
    /// fixed, so the result is deterministic.
    pub fn contains(&self, p: Vec3) -> Result<bool> {
        if !self.mesh.is_watertight() {
            return Err(Error::Mesh(
                "inside test requires a watertight mesh".into(),
            ));
        }
        let (lo, hi) = self.mesh.aabb();
        let diag = (hi - lo).norm() + 1.0;
        if p.x < lo.x || p.y < lo.y || p.z < lo.z || p.x > hi.x || p.y > hi.y || p.z > hi.z {
            return Ok(false);
        }
        let mut last = false;
        for dir in GENERIC_DIRECTIONS {
            let ray = Ray::new(p, dir, diag);
            let hits = self.ray_cast_all(&ray);
            let mut clean = true;
            for h in &hits {
                let w = 1.0 - h.bary_u - h.bary_v;
                let edge_eps = 1e-9;
                if h.bary_u < edge_eps || h.bary_v < edge_eps || w < edge_eps {
                    clean = false;
                    break;
                }
            }
            last = hits.len() % 2 == 1;
            if clean {
                return Ok(last);
            }
        }
        // Every probe grazed an edge; fall back to the final parity.
        Ok(last)
    }

    /// Signed distance: negative inside, positive outside, zero on the
    /// surface. Magnitude is the exact closest-surface distance; the sign
    /// comes from the parity test. Requires a watertight mesh.
    pub fn signed_distance(&self, p: Vec3) -> Result<f64> {
        let d = self.unsigned_distance(p);
        Ok(if self.contains(p)? { -d } else { d })
    }
}

/// Probe directions with irrational-looking components so axis-aligned
/// geometry is never hit edge-on by the first cast.
const GENERIC_DIRECTIONS: [Vec3; 4] = [
    Vec3 {
        x: 0.2931985626631516,
        y: 0.571386960002251,
        z: 0.7665191092149287,
    },
    Vec3 {
        x: -0.6432515605498811,
        y: 0.41216118654206996,
        z: 0.6452523430088232,
    },
    Vec3 {
        x: 0.5119649316032366,
        y: -0.7329497946585399,
        z: 0.44796931515283206,
    },
    Vec3 {
        x: -0.33110414863469456,
        y: -0.5171626732451271,
        z: -0.7892482576216737,
    },
];
