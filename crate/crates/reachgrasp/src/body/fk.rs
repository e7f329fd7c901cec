//! Forward kinematics, generic over the scalar type so the same code serves
//! plain evaluation (f64) and gradient recording (tape variables).

use crate::autodiff::{Real, M3, V3};
use crate::body::skeleton::{Skeleton, JOINT_COUNT};
use crate::palm;
use crate::scene::Handedness;

/// Pose expressed in optimization variables: `rotations[0]` is the root
/// orientation, `rotations[j]` the local rotation of joint j, all axis-angle.
/// The root translation is in meters and is not affected by `beta`.
#[derive(Debug, Clone)]
pub struct PoseVars<R> {
    pub root_translation: V3<R>,
    pub rotations: Vec<V3<R>>,
    pub beta: R,
}

/// World transform per joint.
#[derive(Debug, Clone)]
pub struct Fk<R> {
    pub joint_rotation: Vec<M3<R>>,
    pub joint_position: Vec<V3<R>>,
}

/// World landmark positions attached to the head.
#[derive(Debug, Clone, Copy)]
pub struct FacePoints<R> {
    pub nose_tip: V3<R>,
    pub head_back: V3<R>,
    pub glabella: V3<R>,
}

pub fn forward_kinematics<R: Real>(skel: &Skeleton, vars: &PoseVars<R>) -> Fk<R> {
    assert_eq!(vars.rotations.len(), JOINT_COUNT);
    let mut joint_rotation = Vec::with_capacity(JOINT_COUNT);
    let mut joint_position = Vec::with_capacity(JOINT_COUNT);
    joint_rotation.push(M3::from_axis_angle(vars.rotations[0]));
    joint_position.push(vars.root_translation);
    for j in 1..JOINT_COUNT {
        let p = skel.parent[j];
        let offset = V3::<R>::lift(skel.offsets[j]).scale(vars.beta);
        let pos = joint_position[p] + joint_rotation[p].mul_vec(offset);
        let rot = joint_rotation[p].mul_mat(&M3::from_axis_angle(vars.rotations[j]));
        joint_position.push(pos);
        joint_rotation.push(rot);
    }
    Fk { joint_rotation, joint_position }
}

/// World positions of all surface samples, in skeleton sample order. Sample
/// locals scale with `beta` like the bones they ride on.
pub fn surface_points<R: Real>(skel: &Skeleton, fk: &Fk<R>, beta: R) -> Vec<V3<R>> {
    skel.surface
        .iter()
        .map(|s| {
            let p = skel.parent[s.bone];
            fk.joint_position[p] + fk.joint_rotation[p].mul_vec(V3::<R>::lift(s.local).scale(beta))
        })
        .collect()
}

/// Head landmarks in world space (stature-scaled).
pub fn landmark_positions<R: Real>(skel: &Skeleton, fk: &Fk<R>, beta: R) -> FacePoints<R> {
    let head = crate::body::skeleton::HEAD;
    let at = |local| {
        fk.joint_position[head] + fk.joint_rotation[head].mul_vec(V3::<R>::lift(local).scale(beta))
    };
    FacePoints {
        nose_tip: at(skel.landmarks.nose_tip),
        head_back: at(skel.landmarks.head_back),
        glabella: at(skel.landmarks.glabella),
    }
}

/// The body's 99-point palm patch, rigidly attached to the wrist with the
/// protocol-fixed grid (independent of `beta` so it always pairs with the
/// guiding hand's grid).
pub fn body_palm_patch<R: Real>(fk: &Fk<R>, hand: Handedness) -> Vec<V3<R>> {
    let (_, _, _, wrist) = Skeleton::side_joints(hand);
    let t_local = V3::<R>::lift(Skeleton::wrist_thumb_axis(hand));
    let f_local = V3::<R>::lift(Skeleton::wrist_finger_axis(hand));
    let w = fk.joint_position[wrist];
    let t = fk.joint_rotation[wrist].mul_vec(t_local);
    let f = fk.joint_rotation[wrist].mul_vec(f_local);
    palm::patch_offsets()
        .iter()
        .map(|&(a, b)| w + t.scale_f64(a) + f.scale_f64(b))
        .collect()
}

/// The body's two wrist markers (± thumb axis), protocol-fixed lengths.
pub fn body_wrist_markers<R: Real>(fk: &Fk<R>, hand: Handedness) -> [V3<R>; 2] {
    let (_, _, _, wrist) = Skeleton::side_joints(hand);
    let t_local = V3::<R>::lift(Skeleton::wrist_thumb_axis(hand));
    let w = fk.joint_position[wrist];
    let t = fk.joint_rotation[wrist].mul_vec(t_local);
    [
        w + t.scale_f64(palm::WRIST_MARKER_OFFSET),
        w - t.scale_f64(palm::WRIST_MARKER_OFFSET),
    ]
}

/// Outer-palm anchor points of the body's hand: the wrist itself and a
/// protocol-fixed offset along the outward palm direction.
pub fn body_palm_anchors<R: Real>(fk: &Fk<R>, hand: Handedness) -> (V3<R>, V3<R>) {
    let (_, _, _, wrist) = Skeleton::side_joints(hand);
    let out = fk.joint_rotation[wrist].mul_vec(V3::<R>::lift(Skeleton::wrist_palm_out_dir(hand)));
    let w = fk.joint_position[wrist];
    (w, w + out.scale_f64(palm::PALM_ANCHOR_OFFSET))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::skeleton::{L_FOOT, R_ELBOW, R_WRIST};
    use crate::geometry::{Mat3, Vec3};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn rest_vars(root: Vec3) -> PoseVars<f64> {
        PoseVars {
            root_translation: V3::lift(root),
            rotations: vec![V3::zero(); JOINT_COUNT],
            beta: 1.0,
        }
    }

    fn random_vars(rng: &mut StdRng) -> PoseVars<f64> {
        let mut rotations = Vec::with_capacity(JOINT_COUNT);
        for _ in 0..JOINT_COUNT {
            rotations.push(V3::lift(Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )));
        }
        PoseVars {
            root_translation: V3::lift(Vec3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(0.0..2.0),
            )),
            rotations,
            beta: rng.gen_range(0.8..1.35),
        }
    }

    #[test]
    fn rest_pose_accumulates_offsets() {
        let skel = Skeleton::default();
        let root = Vec3::new(0.3, -0.2, 1.0);
        let fk = forward_kinematics(&skel, &rest_vars(root));
        let rest = skel.rest_joint_positions();
        for j in 0..JOINT_COUNT {
            let got = fk.joint_position[j].value();
            assert!((got - (rest[j] + root)).norm() < 1e-12, "joint {j}");
        }
    }

    #[test]
    fn root_translation_shifts_every_point_rigidly() {
        let skel = Skeleton::default();
        let mut rng = StdRng::seed_from_u64(11);
        let vars = random_vars(&mut rng);
        let mut shifted = vars.clone();
        shifted.root_translation =
            vars.root_translation + V3::lift(Vec3::new(1.0, 0.0, 0.0));
        let a = forward_kinematics(&skel, &vars);
        let b = forward_kinematics(&skel, &shifted);
        let pa = surface_points(&skel, &a, vars.beta);
        let pb = surface_points(&skel, &b, shifted.beta);
        for (x, y) in pa.iter().zip(&pb) {
            let d = y.value() - x.value();
            assert!((d - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        }
    }

    /// Independent oracle: accumulate 4×4 homogeneous transforms built from
    /// the geometry module's rotation code (a separate implementation from
    /// the generic FK path).
    fn chain_oracle(skel: &Skeleton, vars: &PoseVars<f64>, joint: usize) -> Vec3 {
        // Build the chain root→joint.
        let mut chain = vec![joint];
        while *chain.last().unwrap() != 0 {
            chain.push(skel.parent[*chain.last().unwrap()]);
        }
        chain.reverse();

        let mut m = [[0.0f64; 4]; 4];
        for i in 0..4 {
            m[i][i] = 1.0;
        }
        let mul = |a: [[f64; 4]; 4], b: [[f64; 4]; 4]| {
            let mut c = [[0.0f64; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    for k in 0..4 {
                        c[i][j] += a[i][k] * b[k][j];
                    }
                }
            }
            c
        };
        let to4 = |r: Mat3, t: Vec3| {
            let mut h = [[0.0f64; 4]; 4];
            for i in 0..3 {
                for j in 0..3 {
                    h[i][j] = r.0[i][j];
                }
            }
            h[0][3] = t.x;
            h[1][3] = t.y;
            h[2][3] = t.z;
            h[3][3] = 1.0;
            h
        };
        for &j in &chain {
            let rot = Mat3::rotation_from_vector(vars.rotations[j].value());
            let t = if j == 0 {
                vars.root_translation.value()
            } else {
                skel.offsets[j] * vars.beta
            };
            m = mul(m, to4(rot, t));
        }
        Vec3::new(m[0][3], m[1][3], m[2][3])
    }

    #[test]
    fn wrist_matches_homogeneous_chain_oracle() {
        let skel = Skeleton::default();
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..50 {
            let vars = random_vars(&mut rng);
            let fk = forward_kinematics(&skel, &vars);
            for joint in [R_WRIST, R_ELBOW, L_FOOT] {
                let got = fk.joint_position[joint].value();
                let want = chain_oracle(&skel, &vars, joint);
                assert!((got - want).norm() < 1e-9, "joint {joint}: {got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn beta_scales_offsets_but_not_root() {
        let skel = Skeleton::default();
        let mut vars = rest_vars(Vec3::new(0.5, 0.5, 1.0));
        vars.beta = 1.25;
        let fk = forward_kinematics(&skel, &vars);
        assert!((fk.joint_position[0].value() - Vec3::new(0.5, 0.5, 1.0)).norm() < 1e-15);
        let rest = skel.rest_joint_positions();
        let wrist = fk.joint_position[R_WRIST].value();
        let want = Vec3::new(0.5, 0.5, 1.0) + rest[R_WRIST] * 1.25;
        assert!((wrist - want).norm() < 1e-12);
    }

    #[test]
    fn palm_patch_is_rigid_in_wrist_frame() {
        let skel = Skeleton::default();
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..5 {
            let vars = random_vars(&mut rng);
            let fk = forward_kinematics(&skel, &vars);
            let patch = body_palm_patch(&fk, Handedness::Right);
            assert_eq!(patch.len(), 99);
            let w = fk.joint_position[R_WRIST].value();
            let rot = fk.joint_rotation[R_WRIST].value();
            // Transform world patch points back into the wrist frame and
            // compare with the protocol grid.
            let rt = rot.transpose();
            for (k, &(a, b)) in palm::patch_offsets().iter().enumerate() {
                let local = rt.mul_vec(patch[k].value() - w);
                let want = Skeleton::wrist_thumb_axis(Handedness::Right) * a
                    + Skeleton::wrist_finger_axis(Handedness::Right) * b;
                assert!((local - want).norm() < 1e-12);
            }
            let markers = body_wrist_markers(&fk, Handedness::Right);
            assert!(((markers[0].value() - w).norm() - 0.02).abs() < 1e-12);
            let (a0, a1) = body_palm_anchors(&fk, Handedness::Right);
            assert!((a0.value() - w).norm() < 1e-15);
            assert!(((a1.value() - a0.value()).norm() - 0.02).abs() < 1e-12);
        }
    }

    #[test]
    fn tape_and_f64_paths_agree() {
        use crate::autodiff::Tape;
        let skel = Skeleton::default();
        let mut rng = StdRng::seed_from_u64(321);
        let vars = random_vars(&mut rng);
        let fk64 = forward_kinematics(&skel, &vars);

        let tape = Tape::new();
        let lift_v3 = |v: Vec3| V3::new(tape.var(v.x), tape.var(v.y), tape.var(v.z));
        let tvars = PoseVars {
            root_translation: lift_v3(vars.root_translation.value()),
            rotations: vars.rotations.iter().map(|r| lift_v3(r.value())).collect(),
            beta: tape.var(vars.beta),
        };
        let fkt = forward_kinematics(&skel, &tvars);
        for j in 0..JOINT_COUNT {
            let d = fkt.joint_position[j].value() - fk64.joint_position[j].value();
            assert!(d.norm() < 1e-12);
        }
        let pt = surface_points(&skel, &fkt, tvars.beta);
        let p64 = surface_points(&skel, &fk64, vars.beta);
        for (a, b) in pt.iter().zip(&p64) {
            assert!((a.value() - b.value()).norm() < 1e-12);
        }
    }
}
