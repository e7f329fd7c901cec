//! Deterministic direction-conditioned reach solver.
//!
//! Given a wrist target, a desired elbow→wrist direction, and a handedness,
//! the solver constructs a standing pose whose chosen arm reaches the target
//! exactly. Rather than iterating inverse kinematics, it *places* the body:
//!
//! 1. The elbow is pinned analytically at `target − forearm·d_arm`.
//! 2. Stature β grows (up to a cap) when the elbow is too high to reach at
//!    default height; the spine pitches forward for low targets and extends
//!    slightly for high ones.
//! 3. The root yaw faces the horizontal approach direction and the pelvis is
//!    positioned so the shoulder lands in the vertical plane containing the
//!    elbow and the approach direction, at exactly upper-arm distance — the
//!    two-bone arm chain then closes with zero residual, and a horizontal
//!    arm comes out fully extended.
//! 4. Legs use planar two-bone IK that keeps ankles under hips and feet
//!    flat on the ground; the head rotates so its gaze line passes through
//!    the target; finally the root height is adjusted so the lowest foot
//!    sample sits exactly on the ground plane.
//!
//! Left-hand requests are solved by reflecting the task across a vertical
//! plane through the target, solving right-handed, and mirroring the pose
//! back. The solver is pure arithmetic: same inputs give bit-identical
//! poses.

use crate::body::fk::surface_points;
use crate::body::pose::{mirror_pose, BodyPose};
use crate::body::skeleton::{
    Skeleton, HEAD, JOINT_COUNT, L_ANKLE, L_FOOT, L_HIP, L_KNEE, NECK, R_ANKLE, R_COLLAR, R_ELBOW,
    R_FOOT, R_HIP, R_KNEE, R_SHOULDER, R_WRIST, SPINE1, SPINE2, SPINE3,
};
use crate::error::{Error, Result};
use crate::geometry::{Mat3, PlaneReflection, Vec3};
use crate::scene::Handedness;

/// Horizontal pelvis-to-target envelope (meters).
pub const MIN_STAND: f64 = 0.2;
pub const MAX_STAND: f64 = 1.2;
/// Target height envelope (meters).
pub const MAX_TARGET_Z: f64 = 2.2;
/// Spine pitch engages below/above these target heights (meters).
const LOW_TARGET: f64 = 0.7;
const HIGH_TARGET: f64 = 1.5;
/// Stature multiplier cap.
const BETA_MAX: f64 = 1.35;
/// The elbow may not be pinned below this height (meters).
const MIN_ELBOW_Z: f64 = 0.05;
/// Pelvis may not crouch below this fraction of stature.
const MIN_PELVIS_FRAC: f64 = 0.25;
/// Preferred and hard caps on the shoulder–elbow height gap as a fraction
/// of upper-arm length.
const GAP_SOFT: f64 = 0.88;
const GAP_HARD: f64 = 0.97;

/// Solve a standing reach: wrist at `target`, elbow→wrist along `d_arm`,
/// using the `hand` arm, feet on the ground plane z = 0.
pub fn reach_solve(
    skel: &Skeleton,
    target: Vec3,
    d_arm: Vec3,
    hand: Handedness,
) -> Result<BodyPose> {
    match hand {
        Handedness::Right => solve_right(skel, target, d_arm),
        Handedness::Left => {
            // Reflect the task across a vertical plane through the target,
            // solve right-handed, mirror the pose back.
            let plane = PlaneReflection::vertical(target, Vec3::Y);
            let pose = solve_right(skel, target, plane.reflect_vector(d_arm))?;
            Ok(mirror_pose(skel, &pose, &plane))
        }
    }
}

fn solve_right(skel: &Skeleton, target: Vec3, d_arm: Vec3) -> Result<BodyPose> {
    let d = d_arm
        .normalized_or(1e-9)
        .ok_or_else(|| Error::Infeasible("arm direction has near-zero length".into()))?;
    if target.z < 0.0 || target.z > MAX_TARGET_Z {
        return Err(Error::Infeasible(envelope_report(
            &format!("target height {:.3} m outside [0, {MAX_TARGET_Z}] m", target.z),
            target,
            d,
        )));
    }

    let l_up = skel.bone_length(R_ELBOW);
    let l_fore = skel.bone_length(R_WRIST);

    // Approach direction on the floor; a vertical arm direction leaves the
    // stance direction free and defaults to +x.
    let d_h = match d.horizontal().normalized_or(1e-6) {
        Some(u) => u,
        None => Vec3::X,
    };

    // Spine pitch: lean down toward low targets, extend for high ones.
    let pitch = if target.z < LOW_TARGET {
        1.1 * (LOW_TARGET - target.z) / LOW_TARGET
    } else if target.z > HIGH_TARGET {
        -0.12 * ((target.z - HIGH_TARGET) / 0.5).min(1.0)
    } else {
        0.0
    };

    // Pelvis→shoulder offset in the facing frame at β = 1 (linear in β).
    let s_rel_unit = shoulder_offset_with_pitch(skel, pitch);
    let stand_denom = skel.rest_root_z + s_rel_unit.z + GAP_SOFT * l_up;

    // Fixed point for stature: tall targets push β up (capped), which in
    // turn moves the pinned elbow.
    let mut beta: f64 = 1.0;
    let mut elbow = target - d * (l_fore * beta);
    for _ in 0..4 {
        let needed = (elbow.z / stand_denom) * 1.001;
        beta = needed.clamp(1.0, BETA_MAX);
        elbow = target - d * (l_fore * beta);
    }
    if elbow.z < MIN_ELBOW_Z {
        return Err(Error::Infeasible(envelope_report(
            &format!("pinned elbow height {:.3} m is below {MIN_ELBOW_Z} m", elbow.z),
            target,
            d,
        )));
    }
    let stand_shoulder_z = (skel.rest_root_z + s_rel_unit.z) * beta;
    if elbow.z - GAP_SOFT * l_up * beta > stand_shoulder_z * (1.0 + 1e-9) {
        return Err(Error::Infeasible(envelope_report(
            &format!(
                "target needs shoulder height {:.3} m; maximum at stature cap is {:.3} m",
                elbow.z - GAP_SOFT * l_up * beta,
                stand_shoulder_z
            ),
            target,
            d,
        )));
    }

    // Shoulder height: natural standing height clamped into the reachable
    // band around the elbow, with a crouch floor on the pelvis.
    let gap = GAP_SOFT * l_up * beta;
    let mut z_sh = stand_shoulder_z.clamp(elbow.z - gap, elbow.z + gap);
    let mut z_pelvis = z_sh - s_rel_unit.z * beta;
    let pelvis_floor = min_pelvis_for_leg_clearance(skel, beta).max(MIN_PELVIS_FRAC * beta);
    if z_pelvis < pelvis_floor {
        z_pelvis = pelvis_floor;
        z_sh = z_pelvis + s_rel_unit.z * beta;
    }
    let dz = elbow.z - z_sh;
    if dz.abs() > GAP_HARD * l_up * beta {
        return Err(Error::Infeasible(envelope_report(
            &format!(
                "shoulder–elbow height gap {:.3} m exceeds {:.3} m at the crouch limit",
                dz.abs(),
                GAP_HARD * l_up * beta
            ),
            target,
            d,
        )));
    }

    // Place the shoulder in the vertical plane through the elbow along the
    // approach direction, exactly one upper-arm length away: the arm chain
    // closes with zero residual and a level reach comes out straight.
    let rho = ((l_up * beta) * (l_up * beta) - dz * dz).sqrt();
    let shoulder = Vec3::new(elbow.x - rho * d_h.x, elbow.y - rho * d_h.y, z_sh);

    let yaw = d_h.y.atan2(d_h.x);
    let root_orientation = Vec3::new(0.0, 0.0, yaw);
    let r_yaw = Mat3::rotation_from_vector(root_orientation);
    let s_rel_world = r_yaw.mul_vec(s_rel_unit * beta);
    let pelvis = shoulder - s_rel_world;

    let standing = (target - pelvis).horizontal().norm();
    if !(MIN_STAND..=MAX_STAND).contains(&standing) {
        return Err(Error::Infeasible(envelope_report(
            &format!(
                "standing distance {:.3} m outside [{MIN_STAND}, {MAX_STAND}] m",
                standing
            ),
            target,
            d,
        )));
    }

    let mut pose = BodyPose {
        root_translation: pelvis,
        root_orientation,
        joint_rotations: vec![Vec3::ZERO; JOINT_COUNT - 1],
        beta,
    };
    let spine_rot = Vec3::new(0.0, pitch / 3.0, 0.0);
    pose.set_rotation(SPINE1, spine_rot);
    pose.set_rotation(SPINE2, spine_rot);
    pose.set_rotation(SPINE3, spine_rot);

    // Legs: planar two-bone IK keeping each ankle directly below its hip at
    // the rest ankle height, feet flat and pointing along the stance.
    let l1 = skel.bone_length(R_KNEE) * beta;
    let l2 = skel.bone_length(R_ANKLE) * beta;
    let hip_z = pelvis.z + skel.offsets[R_HIP].z * beta;
    let ankle_z = skel.ankle_rest_height * beta;
    let vertical = (hip_z - ankle_z).max(1e-9);
    let clamp_acos = |x: f64| x.clamp(-1.0, 1.0).acos();
    let d_hip = clamp_acos((l1 * l1 + vertical * vertical - l2 * l2) / (2.0 * l1 * vertical));
    let d_shin = clamp_acos((l2 * l2 + vertical * vertical - l1 * l1) / (2.0 * l2 * vertical));
    for (hip, knee, ankle) in [(R_HIP, R_KNEE, R_ANKLE), (L_HIP, L_KNEE, L_ANKLE)] {
        pose.set_rotation(hip, Vec3::new(0.0, -d_hip, 0.0));
        pose.set_rotation(knee, Vec3::new(0.0, d_hip + d_shin, 0.0));
        pose.set_rotation(ankle, Vec3::new(0.0, -d_shin, 0.0));
    }

    // Arm: aim the shoulder at the pinned elbow, then the elbow at the
    // target. Both are exact by the shoulder placement above.
    let fk = pose.fk(skel);
    let shoulder_now = fk.joint_position[R_SHOULDER].value();
    let collar_frame = fk.joint_rotation[R_COLLAR].value();
    let local_bone = skel.offsets[R_ELBOW].normalized();
    let to_elbow = collar_frame.transpose().mul_vec((elbow - shoulder_now).normalized());
    let q_shoulder = Mat3::rotation_between(local_bone, to_elbow);
    pose.set_rotation(R_SHOULDER, q_shoulder.to_axis_angle_vector());

    let shoulder_frame = collar_frame.mul_mat(&q_shoulder);
    let local_fore = skel.offsets[R_WRIST].normalized();
    let to_wrist = shoulder_frame.transpose().mul_vec((target - elbow).normalized());
    let q_elbow = Mat3::rotation_between(local_fore, to_wrist);
    pose.set_rotation(R_ELBOW, q_elbow.to_axis_angle_vector());

    aim_head_at(skel, &mut pose, target);

    // Exact grounding: drop the root so the lowest foot sample touches 0.
    let fk = pose.fk(skel);
    let pts = surface_points(skel, &fk, beta);
    let mut min_foot = f64::INFINITY;
    for (s, p) in skel.surface.iter().zip(&pts) {
        if s.bone == L_FOOT || s.bone == R_FOOT {
            min_foot = min_foot.min(p.value().z);
        }
    }
    pose.root_translation.z -= min_foot;

    Ok(pose)
}

/// Lowest pelvis height at which the bent knee still clears the ground.
///
/// With the ankle pinned at rest height and the knee pushed forward by the
/// two-bone leg IK, the knee joint height is strictly increasing in pelvis
/// height (its derivative is `1/2 + (L1² − L2²)/(2D²) > 0`), so a bisection
/// finds the crouch limit where the knee capsule would touch the ground.
fn min_pelvis_for_leg_clearance(skel: &Skeleton, beta: f64) -> f64 {
    let l1 = skel.bone_length(R_KNEE) * beta;
    let l2 = skel.bone_length(R_ANKLE) * beta;
    let ankle_z = skel.ankle_rest_height * beta;
    let hip_drop = skel.offsets[R_HIP].z * beta; // negative
    let clearance = skel.radii[R_KNEE] * beta + 2e-3;
    let knee_z = |pelvis_z: f64| {
        let d = (pelvis_z + hip_drop - ankle_z).max(1e-9);
        let cos_hip = ((l1 * l1 + d * d - l2 * l2) / (2.0 * l1 * d)).clamp(-1.0, 1.0);
        pelvis_z + hip_drop - l1 * cos_hip
    };
    let mut hi = skel.rest_root_z * beta;
    if knee_z(hi) < clearance {
        return hi;
    }
    // Lower bracket: the fold limit of the two-bone chain.
    let mut lo = ankle_z - hip_drop + (l1 - l2).abs() * 1.05;
    if knee_z(lo) >= clearance {
        return lo;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if knee_z(mid) >= clearance {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Pelvis→shoulder offset in the facing frame for a given total spine
/// pitch, at β = 1: chain pelvis→spine1→spine2→spine3→collar→shoulder with
/// the pitch distributed over the three spine joints.
fn shoulder_offset_with_pitch(skel: &Skeleton, pitch: f64) -> Vec3 {
    let mut pos = Vec3::ZERO;
    let mut rot = Mat3::identity();
    let step = Mat3::rotation_from_vector(Vec3::new(0.0, pitch / 3.0, 0.0));
    for j in [SPINE1, SPINE2, SPINE3] {
        pos = pos + rot.mul_vec(skel.offsets[j]);
        rot = rot.mul_mat(&step);
    }
    for j in [R_COLLAR, R_SHOULDER] {
        pos = pos + rot.mul_vec(skel.offsets[j]);
    }
    pos
}

/// Rotate the head (about its own joint) until back-of-head, glabella, and
/// the target are collinear with the target ahead. The iteration contracts
/// at a rate of roughly `|head_back offset| / |target − head|`, so targets
/// closer to the head than `HEAD_AIM_MIN_DIST` (where it would stall or
/// oscillate) are left as-is.
pub const HEAD_AIM_MIN_DIST: f64 = 0.25;

fn aim_head_at(skel: &Skeleton, pose: &mut BodyPose, target: Vec3) {
    let fk = pose.fk(skel);
    let h = fk.joint_position[HEAD].value();
    if (target - h).norm() < HEAD_AIM_MIN_DIST * pose.beta {
        return;
    }
    let neck_frame = fk.joint_rotation[NECK].value();
    let mut head_world = fk.joint_rotation[HEAD].value();
    let a_local = skel.landmarks.head_back * pose.beta;
    let b_local = skel.landmarks.glabella * pose.beta;
    for _ in 0..200 {
        let a = h + head_world.mul_vec(a_local);
        let b = h + head_world.mul_vec(b_local);
        let gaze = (b - a).normalized();
        let want = match (target - a).normalized_or(1e-9) {
            Some(v) => v,
            None => break,
        };
        if gaze.angle_to(want) < 1e-11 {
            break;
        }
        head_world = Mat3::rotation_between(gaze, want).mul_mat(&head_world);
    }
    let local = neck_frame.transpose().mul_mat(&head_world);
    pose.set_rotation(HEAD, local.to_axis_angle_vector());
}

fn envelope_report(reason: &str, target: Vec3, d: Vec3) -> String {
    format!(
        "unreachable target: {reason} (target ({:.3}, {:.3}, {:.3}), arm direction \
         ({:.3}, {:.3}, {:.3}); envelope: standing distance [{MIN_STAND}, {MAX_STAND}] m, \
         target height [0, {MAX_TARGET_Z}] m, stature ≤ {BETA_MAX})",
        target.x, target.y, target.z, d.x, d.y, d.z
    )
}
