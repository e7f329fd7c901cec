//! 3x3 rotations, rigid transforms, and reflections across vertical planes.

use super::vec3::Vec3;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat3(pub [[f64; 3]; 3]);

pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

impl Mat3 {
    pub fn identity() -> Mat3 {
        IDENTITY
    }

    pub fn from_columns(c0: Vec3, c1: Vec3, c2: Vec3) -> Mat3 {
        Mat3([
            [c0.x, c1.x, c2.x],
            [c0.y, c1.y, c2.y],
            [c0.z, c1.z, c2.z],
        ])
    }

    pub fn col(&self, i: usize) -> Vec3 {
        Vec3::new(self.0[0][i], self.0[1][i], self.0[2][i])
    }

    pub fn row(&self, i: usize) -> Vec3 {
        Vec3::new(self.0[i][0], self.0[i][1], self.0[i][2])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        Vec3::new(self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v))
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.row(i).dot(o.col(j));
            }
        }
        Mat3(r)
    }

    pub fn determinant(&self) -> f64 {
        self.col(0).dot(self.col(1).cross(self.col(2)))
    }

    /// Largest deviation of `R^T R` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let t = self.transpose().mul_mat(self);
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((t.0[i][j] - want).abs());
            }
        }
        worst
    }

    /// Rotation about a unit `axis` by `angle` radians (right-hand rule).
    pub fn rotation_axis_angle(axis: Vec3, angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        let (x, y, z) = (axis.x, axis.y, axis.z);
        Mat3([
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ])
    }

    /// Rotation encoded as an axis-angle vector (angle = length).
    pub fn rotation_from_vector(v: Vec3) -> Mat3 {
        let angle = v.norm();
        if angle < 1e-12 {
            // First-order Rodrigues term keeps tiny rotations exact enough.
            return Mat3([
                [1.0, -v.z, v.y],
                [v.z, 1.0, -v.x],
                [-v.y, v.x, 1.0],
            ]);
        }
        Mat3::rotation_axis_angle(v / angle, angle)
    }

    /// Axis-angle vector of a rotation matrix, with angle in [0, pi].
    pub fn to_axis_angle_vector(&self) -> Vec3 {
        let m = &self.0;
        let cos = ((m[0][0] + m[1][1] + m[2][2] - 1.0) / 2.0).clamp(-1.0, 1.0);
        let axis_raw = Vec3::new(
            m[2][1] - m[1][2],
            m[0][2] - m[2][0],
            m[1][0] - m[0][1],
        );
        let sin = axis_raw.norm() / 2.0;
        let angle = sin.atan2(cos);
        if angle < 1e-9 {
            return axis_raw / 2.0;
        }
        if std::f64::consts::PI - angle < 1e-6 {
            // Near pi the off-diagonal difference vanishes; recover the axis
            // from the symmetric part instead.
            let xx = ((m[0][0] + 1.0) / 2.0).max(0.0).sqrt();
            let yy = ((m[1][1] + 1.0) / 2.0).max(0.0).sqrt();
            let zz = ((m[2][2] + 1.0) / 2.0).max(0.0).sqrt();
            let mut axis = Vec3::new(xx, yy, zz);
            if axis.norm() < 1e-9 {
                return Vec3::new(angle, 0.0, 0.0);
            }
            axis = axis.normalized();
            // Fix signs from the larger off-diagonal sums.
            if m[1][0] + m[0][1] < 0.0 {
                axis.y = -axis.y;
            }
            if m[2][0] + m[0][2] < 0.0 {
                axis.z = -axis.z;
            }
            if axis_raw.dot(axis) < 0.0 {
                axis = -axis;
            }
            return axis * angle;
        }
        axis_raw.normalized() * angle
    }

    /// Shortest-arc rotation taking unit vector `from` onto unit vector `to`.
    pub fn rotation_between(from: Vec3, to: Vec3) -> Mat3 {
        let c = from.dot(to).clamp(-1.0, 1.0);
        let axis = from.cross(to);
        let s = axis.norm();
        if s < 1e-12 {
            if c > 0.0 {
                return IDENTITY;
            }
            // Opposite vectors: rotate pi about any orthogonal axis.
            return Mat3::rotation_axis_angle(from.any_orthonormal(), std::f64::consts::PI);
        }
        Mat3::rotation_axis_angle(axis / s, s.atan2(c))
    }
}

/// Rigid transform: rotate then translate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        RigidTransform {
            rotation: IDENTITY,
            translation: Vec3::default(),
        }
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn translation(t: Vec3) -> Self {
        RigidTransform {
            rotation: IDENTITY,
            translation: t,
        }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation.mul_vec(p) + self.translation
    }

    pub fn apply_vector(&self, v: Vec3) -> Vec3 {
        self.rotation.mul_vec(v)
    }

    pub fn compose(&self, inner: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation.mul_mat(&inner.rotation),
            translation: self.rotation.mul_vec(inner.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -rt.mul_vec(self.translation),
        }
    }

    /// Rejects rotations that are not orthonormal within `tol` or reflected.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let err = self.rotation.orthonormality_error();
        if err > tol {
            return Err(Error::Config(format!(
                "transform rotation is not orthonormal (error {err:.3e}, tolerance {tol:.1e})"
            )));
        }
        if self.rotation.determinant() < 0.0 {
            return Err(Error::Config(
                "transform rotation is a reflection (determinant < 0)".into(),
            ));
        }
        Ok(())
    }
}

/// Reflection across a vertical plane through `point` with horizontal unit
/// normal `normal`.
#[derive(Debug, Clone, Copy)]
pub struct PlaneReflection {
    pub point: Vec3,
    pub normal: Vec3,
}

impl PlaneReflection {
    /// Vertical plane through `point` whose normal is the horizontal unit
    /// vector `normal` (z component must be negligible).
    pub fn vertical(point: Vec3, normal: Vec3) -> Self {
        debug_assert!(normal.z.abs() < 1e-9, "reflection plane must be vertical");
        PlaneReflection {
            point,
            normal: normal.horizontal().normalized(),
        }
    }

    pub fn reflect_point(&self, p: Vec3) -> Vec3 {
        p - self.normal * (2.0 * (p - self.point).dot(self.normal))
    }

    pub fn reflect_vector(&self, v: Vec3) -> Vec3 {
        v - self.normal * (2.0 * v.dot(self.normal))
    }

    /// Conjugated rotation `M R M` for reflection matrix M.
    pub fn reflect_rotation(&self, r: &Mat3) -> Mat3 {
        let m = self.reflection_matrix();
        m.mul_mat(r).mul_mat(&m)
    }

    pub fn reflection_matrix(&self) -> Mat3 {
        let n = self.normal;
        Mat3([
            [1.0 - 2.0 * n.x * n.x, -2.0 * n.x * n.y, -2.0 * n.x * n.z],
            [-2.0 * n.y * n.x, 1.0 - 2.0 * n.y * n.y, -2.0 * n.y * n.z],
            [-2.0 * n.z * n.x, -2.0 * n.z * n.y, 1.0 - 2.0 * n.z * n.z],
        ])
    }
}

/// Rotation by `angle` about the world vertical axis through `pivot`.
pub fn rotate_about_vertical(pivot: Vec3, angle: f64, p: Vec3) -> Vec3 {
    let r = Mat3::rotation_axis_angle(Vec3::Z, angle);
    r.mul_vec(p - pivot) + pivot
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_angle_round_trip() {
        let cases = [
            Vec3::new(0.3, -0.2, 0.9),
            Vec3::new(1e-10, 0.0, 0.0),
            Vec3::new(0.0, 3.1, 0.0),
            Vec3::new(-2.0, 1.0, 0.5),
        ];
        for v in cases {
            let r = Mat3::rotation_from_vector(v);
            let back = r.to_axis_angle_vector();
            let r2 = Mat3::rotation_from_vector(back);
            for i in 0..3 {
                for j in 0..3 {
                    assert!(
                        (r.0[i][j] - r2.0[i][j]).abs() < 1e-9,
                        "mismatch for {v:?}: {r:?} vs {r2:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn rotation_between_maps_from_to_to() {
        let pairs = [
            (Vec3::X, Vec3::Y),
            (Vec3::X, -Vec3::X),
            (Vec3::new(0.6, 0.8, 0.0), Vec3::new(0.0, 0.6, 0.8)),
        ];
        for (a, b) in pairs {
            let r = Mat3::rotation_between(a, b);
            assert!(r.mul_vec(a).distance(b) < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reflection_is_involution() {
        let plane = PlaneReflection::vertical(Vec3::new(0.3, -0.1, 0.0), Vec3::new(0.6, 0.8, 0.0));
        let p = Vec3::new(1.0, 2.0, 3.0);
        let q = plane.reflect_point(plane.reflect_point(p));
        assert!(p.distance(q) < 1e-12);
        let v = Vec3::new(-0.2, 0.4, 0.9);
        assert!(plane.reflect_vector(plane.reflect_vector(v)).distance(v) < 1e-12);
    }

    #[test]
    fn compose_and_inverse() {
        let a = RigidTransform {
            rotation: Mat3::rotation_axis_angle(Vec3::Z, 0.7),
            translation: Vec3::new(1.0, 2.0, 3.0),
        };
        let b = RigidTransform {
            rotation: Mat3::rotation_axis_angle(Vec3::X, -0.3),
            translation: Vec3::new(-0.5, 0.0, 0.25),
        };
        let p = Vec3::new(0.1, 0.2, 0.3);
        let via_compose = a.compose(&b).apply(p);
        let via_chain = a.apply(b.apply(p));
        assert!(via_compose.distance(via_chain) < 1e-12);
        let id = a.compose(&a.inverse());
        assert!(id.apply(p).distance(p) < 1e-12);
    }
}
