//! Pose value types, arm direction, handedness detection, pose mirroring,
//! and capsule-mesh export of a posed body.

use crate::body::fk::{forward_kinematics, landmark_positions, surface_points, Fk, PoseVars};
use crate::body::skeleton::{
    mirror_joint, Skeleton, JOINT_COUNT, L_WRIST, R_WRIST,
};
use crate::error::{Error, Result};
use crate::geometry::{Mat3, PlaneReflection, TriMesh, Vec3};
use crate::scene::Handedness;
use serde::{Deserialize, Serialize};

/// A body pose: root transform, 21 local joint rotations (axis-angle, joints
/// 1..22 in skeleton order), and a stature multiplier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BodyPose {
    pub root_translation: Vec3,
    pub root_orientation: Vec3,
    pub joint_rotations: Vec<Vec3>,
    pub beta: f64,
}

impl BodyPose {
    /// Rest pose standing on the ground plane.
    pub fn rest(skel: &Skeleton) -> BodyPose {
        BodyPose {
            root_translation: Vec3::new(0.0, 0.0, skel.rest_root_z),
            root_orientation: Vec3::ZERO,
            joint_rotations: vec![Vec3::ZERO; JOINT_COUNT - 1],
            beta: 1.0,
        }
    }

    /// Rotation of a joint; index 0 is the root orientation.
    pub fn rotation_of(&self, joint: usize) -> Vec3 {
        if joint == 0 {
            self.root_orientation
        } else {
            self.joint_rotations[joint - 1]
        }
    }

    pub fn set_rotation(&mut self, joint: usize, w: Vec3) {
        if joint == 0 {
            self.root_orientation = w;
        } else {
            self.joint_rotations[joint - 1] = w;
        }
    }

    pub fn to_vars(&self) -> PoseVars<f64> {
        let mut rotations = Vec::with_capacity(JOINT_COUNT);
        rotations.push(crate::autodiff::V3::lift(self.root_orientation));
        for w in &self.joint_rotations {
            rotations.push(crate::autodiff::V3::lift(*w));
        }
        PoseVars {
            root_translation: crate::autodiff::V3::lift(self.root_translation),
            rotations,
            beta: self.beta,
        }
    }

    pub fn from_vars(vars: &PoseVars<f64>) -> BodyPose {
        BodyPose {
            root_translation: vars.root_translation.value(),
            root_orientation: vars.rotations[0].value(),
            joint_rotations: vars.rotations[1..].iter().map(|v| v.value()).collect(),
            beta: vars.beta,
        }
    }

    pub fn fk(&self, skel: &Skeleton) -> Fk<f64> {
        forward_kinematics(skel, &self.to_vars())
    }

    /// Wrap every axis-angle so its magnitude is ≤ π (same rotation). Done
    /// at export; optimization itself works on unwrapped values.
    pub fn wrap_angles(&mut self) {
        let wrap = |w: Vec3| -> Vec3 {
            let theta = w.norm();
            if theta <= std::f64::consts::PI || theta == 0.0 {
                return w;
            }
            let two_pi = 2.0 * std::f64::consts::PI;
            let wrapped = theta - two_pi * ((theta + std::f64::consts::PI) / two_pi).floor();
            w * (wrapped / theta)
        };
        self.root_orientation = wrap(self.root_orientation);
        for w in &mut self.joint_rotations {
            *w = wrap(*w);
        }
    }

    /// Joints whose rotation magnitude exceeds the configured cone limit.
    /// Violations are flagged, never fatal.
    pub fn limit_violations(&self, skel: &Skeleton) -> Vec<usize> {
        let mut out = Vec::new();
        for j in 0..JOINT_COUNT {
            let mut w = self.rotation_of(j);
            let mut tmp = BodyPose {
                root_translation: Vec3::ZERO,
                root_orientation: w,
                joint_rotations: vec![],
                beta: 1.0,
            };
            // Compare the wrapped magnitude so equivalent angles don't flag.
            tmp.wrap_angles();
            w = tmp.root_orientation;
            if w.norm() > skel.limits[j] + 1e-12 {
                out.push(j);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.joint_rotations.len() != JOINT_COUNT - 1 {
            return Err(Error::Config(format!(
                "pose needs {} joint rotations, got {}",
                JOINT_COUNT - 1,
                self.joint_rotations.len()
            )));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::Config("pose beta must be positive and finite".into()));
        }
        let finite = |v: Vec3| v.is_finite();
        if !finite(self.root_translation)
            || !finite(self.root_orientation)
            || !self.joint_rotations.iter().all(|w| finite(*w))
        {
            return Err(Error::Config("pose contains non-finite values".into()));
        }
        Ok(())
    }
}

/// Sampled body surface in world space with per-point bone attribution.
#[derive(Debug, Clone)]
pub struct BodySurface {
    pub points: Vec<Vec3>,
    /// Bone (child-joint id) each point rides on.
    pub bone: Vec<usize>,
}

pub fn body_surface(skel: &Skeleton, pose: &BodyPose) -> BodySurface {
    let fk = pose.fk(skel);
    let points = surface_points(skel, &fk, pose.beta).into_iter().map(|p| p.value()).collect();
    BodySurface { points, bone: skel.surface.iter().map(|s| s.bone).collect() }
}

/// Normalized elbow→wrist direction of the chosen arm.
pub fn arm_direction(skel: &Skeleton, pose: &BodyPose, hand: Handedness) -> Vec3 {
    let fk = pose.fk(skel);
    arm_direction_fk(&fk, hand)
}

pub fn arm_direction_fk(fk: &Fk<f64>, hand: Handedness) -> Vec3 {
    let (_, _, elbow, wrist) = Skeleton::side_joints(hand);
    (fk.joint_position[wrist].value() - fk.joint_position[elbow].value()).normalized()
}

/// Which arm is doing the interacting: the one whose glabella→wrist ray is
/// closer in angle to the head_back→nose gaze ray. Exact tie → right.
pub fn detect_handedness(skel: &Skeleton, pose: &BodyPose) -> Handedness {
    let fk = pose.fk(skel);
    let face = landmark_positions(skel, &fk, pose.beta);
    let gaze = face.nose_tip.value() - face.head_back.value();
    let to_r = fk.joint_position[R_WRIST].value() - face.glabella.value();
    let to_l = fk.joint_position[L_WRIST].value() - face.glabella.value();
    if gaze.angle_to(to_r) <= gaze.angle_to(to_l) {
        Handedness::Right
    } else {
        Handedness::Left
    }
}

/// Body-local sagittal reflection (the rest body is symmetric under y
/// negation).
fn sagittal_matrix() -> Mat3 {
    Mat3([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]])
}

/// Mirror a pose about a vertical world plane: left/right joint channels
/// swap with their rotations conjugated by the body's sagittal reflection,
/// and the root transform is reflected by the plane. Forward kinematics of
/// the result equals the reflection of the input's forward kinematics, with
/// surface points related by the skeleton's `surface_mirror_map`.
pub fn mirror_pose(skel: &Skeleton, pose: &BodyPose, plane: &PlaneReflection) -> BodyPose {
    let _ = skel;
    // Axis-angle conjugation by any reflection M sends w to −M·w; for the
    // body-local sagittal map that is (−x, y, −z).
    let conj = |w: Vec3| Vec3::new(-w.x, w.y, -w.z);

    let mut joint_rotations = vec![Vec3::ZERO; JOINT_COUNT - 1];
    for j in 1..JOINT_COUNT {
        joint_rotations[j - 1] = conj(pose.rotation_of(mirror_joint(j)));
    }

    let root_rot = Mat3::rotation_from_vector(pose.root_orientation);
    let reflected = plane
        .reflection_matrix()
        .mul_mat(&root_rot)
        .mul_mat(&sagittal_matrix());
    BodyPose {
        root_translation: plane.reflect_point(pose.root_translation),
        root_orientation: reflected.to_axis_angle_vector(),
        joint_rotations,
        beta: pose.beta,
    }
}

/// Export the posed body as a merged mesh of watertight capsules (one per
/// bone, 16 azimuthal segments).
pub fn body_mesh(skel: &Skeleton, pose: &BodyPose) -> TriMesh {
    let fk = pose.fk(skel);
    let mut merged = TriMesh::default();
    for j in 1..JOINT_COUNT {
        let p0 = fk.joint_position[skel.parent[j]].value();
        let p1 = fk.joint_position[j].value();
        let capsule = make_capsule(p0, p1, skel.radii[j] * pose.beta);
        merged.merge(&capsule);
    }
    merged
}

/// Watertight UV capsule from `a` to `b`.
fn make_capsule(a: Vec3, b: Vec3, r: f64) -> TriMesh {
    const SEG: usize = 16;
    const CAP_RINGS: usize = 4; // polar rings per cap, the last at the equator

    let axis = (b - a).normalized();
    let e1 = axis.any_orthonormal();
    let e2 = axis.cross(e1);

    let mut vertices: Vec<Vec3> = Vec::new();
    // Top pole (at b-side), rings from the b cap down through the a cap,
    // bottom pole.
    vertices.push(b + axis * r);
    let mut rings: Vec<usize> = Vec::new(); // start index of each ring
    for i in 1..=CAP_RINGS {
        let psi = std::f64::consts::FRAC_PI_2 * i as f64 / CAP_RINGS as f64;
        rings.push(vertices.len());
        let center = b + axis * (r * psi.cos());
        push_ring(&mut vertices, center, e1, e2, r * psi.sin(), SEG);
    }
    for i in (1..=CAP_RINGS).rev() {
        let psi = std::f64::consts::FRAC_PI_2 * i as f64 / CAP_RINGS as f64;
        rings.push(vertices.len());
        let center = a - axis * (r * psi.cos());
        push_ring(&mut vertices, center, e1, e2, r * psi.sin(), SEG);
    }
    vertices.push(a - axis * r);
    let bottom = (vertices.len() - 1) as u32;

    let mut triangles: Vec<[u32; 3]> = Vec::new();
    // Top fan.
    let first = rings[0] as u32;
    for s in 0..SEG as u32 {
        triangles.push([0, first + s, first + (s + 1) % SEG as u32]);
    }
    // Strips between consecutive rings.
    for w in rings.windows(2) {
        let (ra, rb) = (w[0] as u32, w[1] as u32);
        for s in 0..SEG as u32 {
            let sn = (s + 1) % SEG as u32;
            triangles.push([ra + s, rb + s, rb + sn]);
            triangles.push([ra + s, rb + sn, ra + sn]);
        }
    }
    // Bottom fan.
    let last = *rings.last().unwrap() as u32;
    for s in 0..SEG as u32 {
        triangles.push([bottom, last + (s + 1) % SEG as u32, last + s]);
    }
    TriMesh::new(vertices, triangles).expect("capsule mesh is well-formed")
}

fn push_ring(vertices: &mut Vec<Vec3>, center: Vec3, e1: Vec3, e2: Vec3, radius: f64, seg: usize) {
    for s in 0..seg {
        let phi = 2.0 * std::f64::consts::PI * s as f64 / seg as f64;
        vertices.push(center + e1 * (radius * phi.cos()) + e2 * (radius * phi.sin()));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::skeleton::{L_ELBOW, L_SHOULDER, R_ELBOW, R_SHOULDER};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_pose(rng: &mut StdRng) -> BodyPose {
        let mut pose = BodyPose::rest(&Skeleton::default());
        pose.root_translation = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(0.5..1.5),
        );
        pose.root_orientation =
            Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        for w in &mut pose.joint_rotations {
            *w = Vec3::new(
                rng.gen_range(-0.8..0.8),
                rng.gen_range(-0.8..0.8),
                rng.gen_range(-0.8..0.8),
            );
        }
        pose.beta = rng.gen_range(0.9..1.3);
        pose
    }

    #[test]
    fn rest_arm_directions_point_sideways() {
        let skel = Skeleton::default();
        let pose = BodyPose::rest(&skel);
        let right = arm_direction(&skel, &pose, Handedness::Right);
        let left = arm_direction(&skel, &pose, Handedness::Left);
        assert!((right - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
        assert!((left - Vec3::Y).norm() < 1e-12);
    }

    #[test]
    fn arm_direction_matches_fk_oracle() {
        let skel = Skeleton::default();
        let mut rng = StdRng::seed_from_u64(77);
        for _ in 0..20 {
            let pose = random_pose(&mut rng);
            let fk = pose.fk(&skel);
            for hand in [Handedness::Right, Handedness::Left] {
                let (_, _, elbow, wrist) = Skeleton::side_joints(hand);
                let want = (fk.joint_position[wrist].value() - fk.joint_position[elbow].value())
                    .normalized();
                assert!((arm_direction(&skel, &pose, hand) - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_reach_is_detected_by_hand() {
        let skel = Skeleton::default();
        // Swing the right arm forward (+x): wrist lands near the gaze line.
        let mut pose = BodyPose::rest(&skel);
        pose.set_rotation(R_SHOULDER, Vec3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
        assert_eq!(detect_handedness(&skel, &pose), Handedness::Right);

        // The mirrored pose must classify as left.
        let plane = PlaneReflection::vertical(pose.root_translation, Vec3::Y);
        let mirrored = mirror_pose(&skel, &pose, &plane);
        assert_eq!(detect_handedness(&skel, &mirrored), Handedness::Left);

        // Rest pose is an exact tie → right by convention.
        assert_eq!(detect_handedness(&skel, &BodyPose::rest(&skel)), Handedness::Right);
    }

    #[test]
    fn handedness_matches_direct_angle_oracle() {
        let skel = Skeleton::default();
        let mut rng = StdRng::seed_from_u64(99);
        for _ in 0..100 {
            let pose = random_pose(&mut rng);
            let fk = pose.fk(&skel);
            let face = landmark_positions(&skel, &fk, pose.beta);
            let g = face.nose_tip.value() - face.head_back.value();
            let ar = g.angle_to(fk.joint_position[R_WRIST].value() - face.glabella.value());
            let al = g.angle_to(fk.joint_position[L_WRIST].value() - face.glabella.value());
            let want = if ar <= al { Handedness::Right } else { Handedness::Left };
            assert_eq!(detect_handedness(&skel, &pose), want);
        }
    }

    #[test]
    fn mirror_twice_is_identity() {
        let skel = Skeleton::default();
        let mut rng = StdRng::seed_from_u64(3);
        let plane = PlaneReflection::vertical(Vec3::new(0.4, -0.2, 0.0), Vec3::new(0.6, 0.8, 0.0));
        for _ in 0..10 {
            let pose = random_pose(&mut rng);
            let twice = mirror_pose(&skel, &mirror_pose(&skel, &pose, &plane), &plane);
            assert!((twice.root_translation - pose.root_translation).norm() < 1e-12);
            // Compare rotations as matrices: axis-angle extraction can pick
            // an equivalent representation.
            let ra = Mat3::rotation_from_vector(twice.root_orientation);
            let rb = Mat3::rotation_from_vector(pose.root_orientation);
            assert!(ra.mul_mat(&rb.transpose()).to_axis_angle_vector().norm() < 1e-12);
            for (a, b) in twice.joint_rotations.iter().zip(&pose.joint_rotations) {
                assert!((*a - *b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rest_pose_is_fixed_by_its_sagittal_mirror() {
        let skel = Skeleton::default();
        let pose = BodyPose::rest(&skel);
        let plane = PlaneReflection::vertical(pose.root_translation, Vec3::Y);
        let mirrored = mirror_pose(&skel, &pose, &plane);
        assert!((mirrored.root_translation - pose.root_translation).norm() < 1e-12);
        assert!(mirrored.root_orientation.norm() < 1e-12);
        for w in &mirrored.joint_rotations {
            assert!(w.norm() < 1e-12);
        }
    }

    #[test]
    fn mirrored_surface_equals_reflected_surface() {
        let skel = Skeleton::default();
        let mut rng = StdRng::seed_from_u64(41);
        let plane = PlaneReflection::vertical(Vec3::new(0.3, 0.7, 0.0), Vec3::new(-0.8, 0.6, 0.0));
        for _ in 0..5 {
            let pose = random_pose(&mut rng);
            let mirrored = mirror_pose(&skel, &pose, &plane);
            let orig = body_surface(&skel, &pose);
            let mir = body_surface(&skel, &mirrored);
            for (k, p) in orig.points.iter().enumerate() {
                let want = plane.reflect_point(*p);
                let got = mir.points[skel.surface_mirror_map[k]];
                assert!(
                    (got - want).norm() < 1e-9,
                    "sample {k}: {got:?} vs {want:?}"
                );
            }
        }
    }

    #[test]
    fn mirror_swaps_arm_channels() {
        let skel = Skeleton::default();
        let mut pose = BodyPose::rest(&skel);
        let w = Vec3::new(0.3, -0.1, 0.5);
        pose.set_rotation(R_SHOULDER, w);
        pose.set_rotation(R_ELBOW, Vec3::new(0.0, 0.2, -0.4));
        let plane = PlaneReflection::vertical(Vec3::ZERO, Vec3::Y);
        let mirrored = mirror_pose(&skel, &pose, &plane);
        assert!((mirrored.rotation_of(L_SHOULDER) - Vec3::new(-w.x, w.y, -w.z)).norm() < 1e-15);
        assert!(
            (mirrored.rotation_of(L_ELBOW) - Vec3::new(0.0, 0.2, 0.4)).norm() < 1e-15
        );
        assert!(mirrored.rotation_of(R_SHOULDER).norm() < 1e-15);
    }

    #[test]
    fn wrap_angles_preserves_rotation() {
        let mut pose = BodyPose::rest(&Skeleton::default());
        let axis = Vec3::new(1.0, 2.0, -0.5).normalized();
        let theta = 5.0; // > π
        pose.set_rotation(R_SHOULDER, axis * theta);
        let before = Mat3::rotation_from_vector(pose.rotation_of(R_SHOULDER));
        pose.wrap_angles();
        let w = pose.rotation_of(R_SHOULDER);
        assert!(w.norm() <= std::f64::consts::PI + 1e-12);
        let after = Mat3::rotation_from_vector(w);
        assert!(before.mul_mat(&after.transpose()).to_axis_angle_vector().norm() < 1e-12);
    }

    #[test]
    fn limit_violations_flag_only_excessive_joints() {
        let skel = Skeleton::default();
        let mut pose = BodyPose::rest(&skel);
        assert!(pose.limit_violations(&skel).is_empty());
        pose.set_rotation(R_ELBOW, Vec3::new(2.7, 0.0, 0.0)); // limit 2.6
        let flagged = pose.limit_violations(&skel);
        assert_eq!(flagged, vec![R_ELBOW]);
        // A spin by 2π is the identity and must not flag.
        pose.set_rotation(R_ELBOW, Vec3::new(2.0 * std::f64::consts::PI, 0.0, 0.0));
        assert!(pose.limit_violations(&skel).is_empty());
    }

    #[test]
    fn body_mesh_is_watertight_and_grounded_at_rest() {
        let skel = Skeleton::default();
        let pose = BodyPose::rest(&skel);
        let mesh = body_mesh(&skel, &pose);
        assert!(mesh.is_watertight());
        let (lo, hi) = mesh.aabb();
        assert!(lo.z.abs() < 0.01, "soles near the ground, got {}", lo.z);
        assert!((hi.z - 1.70).abs() < 0.01, "crown near 1.7, got {}", hi.z);
    }
}
