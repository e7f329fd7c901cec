//! Rays, ray-triangle intersection, and point-triangle closest point.

use super::vec3::Vec3;
use serde::{Deserialize, Serialize};

/// Hits closer than this along the ray are ignored, so a ray starting
/// exactly on a surface does not report its own origin.
pub const RAY_T_MIN: f64 = 1e-7;

/// Offset applied to ray origins cast from points that may lie on geometry.
pub const ORIGIN_OFFSET: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit direction.
    pub direction: Vec3,
    /// Hits beyond this distance are ignored.
    pub max_distance: f64,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3, max_distance: f64) -> Self {
        Ray {
            origin,
            direction,
            max_distance,
        }
    }

    /// Ray with its origin nudged forward to skip self-intersections.
    pub fn offset(origin: Vec3, direction: Vec3, max_distance: f64) -> Self {
        Ray::new(origin + direction * ORIGIN_OFFSET, direction, max_distance)
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Facing {
    /// Ray met the triangle's outward side.
    Front,
    Back,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HitRecord {
    pub distance: f64,
    pub point: Vec3,
    pub triangle_index: u32,
    pub facing: Facing,
    /// Barycentric coordinates (u toward vertex 1, v toward vertex 2).
    pub bary_u: f64,
    pub bary_v: f64,
}

/// Moller-Trumbore intersection. Counts hits with distance in
/// `(RAY_T_MIN, max_distance]`; grazing hits at the boundary of that open
/// interval are dropped deterministically.
pub fn intersect_triangle(ray: &Ray, a: Vec3, b: Vec3, c: Vec3, tri_index: u32) -> Option<HitRecord> {
    let e1 = b - a;
    let e2 = c - a;
    let pvec = ray.direction.cross(e2);
    let det = e1.dot(pvec);
    if det.abs() < 1e-14 {
        return None; // parallel to the triangle plane
    }
    let inv_det = 1.0 / det;
    let tvec = ray.origin - a;
    let u = tvec.dot(pvec) * inv_det;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(e1);
    let v = ray.direction.dot(qvec) * inv_det;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    let t = e2.dot(qvec) * inv_det;
    if t <= RAY_T_MIN || t > ray.max_distance {
        return None;
    }
    Some(HitRecord {
        distance: t,
        point: ray.at(t),
        triangle_index: tri_index,
        facing: if det > 0.0 { Facing::Front } else { Facing::Back },
        bary_u: u,
        bary_v: v,
    })
}

/// Closest point on triangle `abc` to `p` (Ericson's region test).
pub fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}
