//! The six loss terms of the pose refinement objective.
//!
//! Every term is generic over [`Real`], so one definition serves both the
//! plain `f64` evaluation and the tape-backed gradient evaluation. Discrete
//! quantities that must not be differentiated through — closest surface
//! points and their inside/outside signs, disconnected-vertex membership,
//! the floating-body argmin — are computed once per iteration from plain
//! values and carried in as constants ([`PenetrationContext`],
//! [`GroundBranch`]); the differentiable expressions use them as fixed
//! anchors, which matches the true local derivative wherever those discrete
//! choices are locally constant.

use crate::autodiff::{Real, V3};
use crate::geometry::{IndexedMesh, Vec3};
use crate::hand::GuidingHand;
use crate::par::map_slice;

/// Floor applied to distances before dividing in angle computations.
pub const DISTANCE_FLOOR: f64 = 1e-6;

/// A body whose lowest point is within this height of the ground counts as
/// in contact, not floating. Exact grounding survives only approximately
/// through forward kinematics (roundoff ~1e-16), and the floating branch
/// has unit slope no matter how small the gap, so without a tolerance an
/// exactly-grounded pose would be dragged below ground.
pub const CONTACT_TOLERANCE: f64 = 1e-9;

/// Per-iteration detached data for the receptacle penetration term.
#[derive(Debug, Clone)]
pub struct PenetrationContext {
    /// Closest receptacle surface point per body surface point.
    pub closest: Vec<Vec3>,
    /// Whether each body point is inside the receptacle solid.
    pub inside: Vec<bool>,
    /// Whether each body point is "disconnected": outside the receptacle
    /// but cut off from its bone's proximal joint by receptacle geometry.
    pub disconnected: Vec<bool>,
}

impl PenetrationContext {
    /// Classify every body surface point against the receptacle. `proximal`
    /// holds the world position of each point's bone-proximal joint.
    pub fn build(
        receptacle: &IndexedMesh,
        points: &[Vec3],
        proximal: &[Vec3],
    ) -> crate::error::Result<PenetrationContext> {
        assert_eq!(points.len(), proximal.len());
        if !receptacle.mesh.is_watertight() {
            return Err(crate::error::Error::Mesh(
                "penetration loss requires a watertight receptacle".into(),
            ));
        }
        let indices: Vec<usize> = (0..points.len()).collect();
        let rows = map_slice(&indices, |&i| {
            let p = points[i];
            let closest = receptacle.closest_surface_point(p);
            // Safe: watertightness was checked above.
            let inside = receptacle.contains(p).unwrap_or(false);
            // A point that is inside is penetrating, not disconnected; an
            // outside point is disconnected when the straight segment to
            // its proximal joint passes through receptacle geometry.
            let disconnected = !inside && receptacle.segment_intersects(p, proximal[i]);
            (closest, inside, disconnected)
        });
        let mut ctx = PenetrationContext {
            closest: Vec::with_capacity(rows.len()),
            inside: Vec::with_capacity(rows.len()),
            disconnected: Vec::with_capacity(rows.len()),
        };
        for (c, i, d) in rows {
            ctx.closest.push(c);
            ctx.inside.push(i);
            ctx.disconnected.push(d);
        }
        Ok(ctx)
    }
}

/// Receptacle penetration: mean penetration depth over all surface points
/// plus mean distance back to the receptacle over the disconnected points.
/// Zero when the body is fully outside and nothing is disconnected.
pub fn loss_penetration<R: Real>(points: &[V3<R>], ctx: &PenetrationContext) -> R {
    assert_eq!(points.len(), ctx.closest.len());
    let n = points.len().max(1) as f64;
    let mut depth_sum = R::lift(0.0);
    let mut disc_sum = R::lift(0.0);
    let mut disc_count = 0usize;
    for (i, &p) in points.iter().enumerate() {
        // Points that are neither penetrating nor disconnected contribute
        // exactly zero; skip them so no expression is built for them.
        if !ctx.inside[i] && !ctx.disconnected[i] {
            continue;
        }
        let dist = (p - V3::lift(ctx.closest[i])).norm();
        if ctx.inside[i] {
            // Signed distance is −dist here; |min(0, d)| = dist.
            depth_sum = depth_sum + dist;
        }
        if ctx.disconnected[i] {
            disc_sum = disc_sum + dist;
            disc_count += 1;
        }
    }
    let mut total = depth_sum.scale(1.0 / n);
    if disc_count > 0 {
        total = total + disc_sum.scale(1.0 / disc_count as f64);
    }
    total
}

/// Which branch of the ground loss applies this iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundBranch {
    /// At least one point touches or penetrates the ground: average the
    /// squared-tanh penalty (zero contribution from points above ground).
    Contact,
    /// Every point is strictly above the ground: penalize the height of
    /// the lowest point (held by index so the argmin is not differentiated).
    Floating(usize),
}

impl GroundBranch {
    pub fn classify(heights: &[f64]) -> GroundBranch {
        let mut min_h = f64::INFINITY;
        let mut arg = 0usize;
        for (i, &h) in heights.iter().enumerate() {
            if h < min_h {
                min_h = h;
                arg = i;
            }
        }
        if min_h > CONTACT_TOLERANCE {
            GroundBranch::Floating(arg)
        } else {
            GroundBranch::Contact
        }
    }
}

/// Ground interaction: squared-tanh penalty on below-ground points, or the
/// lowest height when the body floats. Exactly zero for a body resting on
/// the ground.
pub fn loss_ground<R: Real>(points: &[V3<R>], branch: GroundBranch, beta1: f64, beta2: f64) -> R {
    match branch {
        GroundBranch::Floating(idx) => points[idx].z,
        GroundBranch::Contact => {
            let n = points.len().max(1) as f64;
            let mut sum = R::lift(0.0);
            for &p in points {
                // min(h, 0) via the negative part; above-ground points
                // contribute exactly zero value and gradient.
                let below = -p.z.neg_part();
                sum = sum + below.scale(1.0 / beta2).tanh().sq();
            }
            sum.scale(beta1 / n)
        }
    }
}

/// Gaze alignment: the angle subtended at the target `o` between the rays
/// from the back-of-head point `a` and the between-the-eyes point `b`.
/// Zero exactly when `a`, `b`, `o` are collinear.
pub fn loss_gaze<R: Real>(a: V3<R>, b: V3<R>, o: Vec3) -> R {
    let u = V3::<R>::lift(o) - a;
    let v = V3::<R>::lift(o) - b;
    let nu = floored_norm(u);
    let nv = floored_norm(v);
    (u.dot(v) / (nu * nv)).acos_clamped()
}

fn floored_norm<R: Real>(v: V3<R>) -> R {
    let n = v.norm();
    if n.value() < DISTANCE_FLOOR {
        R::lift(DISTANCE_FLOOR)
    } else {
        n
    }
}

/// Pose prior: squared distance of the joint rotation parameters from the
/// reference pose. The root (translation and orientation) is not included.
pub fn loss_pose<R: Real>(joint_rotations: &[V3<R>], reference: &[Vec3]) -> R {
    assert_eq!(joint_rotations.len(), reference.len());
    let mut sum = R::lift(0.0);
    for (&r, &want) in joint_rotations.iter().zip(reference) {
        sum = sum + (r - V3::lift(want)).norm_sq();
    }
    sum
}

/// Upright regularizer: angle between the current feet-center→pelvis
/// direction and the same direction at the reference pose.
pub fn loss_tilt<R: Real>(pelvis: V3<R>, feet_center: V3<R>, reference_dir: Vec3) -> R {
    let v = pelvis - feet_center;
    let n = floored_norm(v);
    (v.dot(V3::lift(reference_dir.normalized())) / n).acos_clamped()
}

/// Hand matching: summed squared distances from the body's palm patch to
/// the guiding palm patch, plus `lambda_wrist` times the same over the two
/// wrist markers.
pub fn loss_hand_match<R: Real>(
    body_patch: &[V3<R>],
    body_markers: &[V3<R>; 2],
    guiding: &GuidingHand,
    lambda_wrist: f64,
) -> R {
    assert_eq!(body_patch.len(), guiding.palm_patch.len());
    let mut sum = R::lift(0.0);
    for (&p, &target) in body_patch.iter().zip(&guiding.palm_patch) {
        sum = sum + p.distance_sq(V3::lift(target));
    }
    let mut wrist_sum = R::lift(0.0);
    for (&m, &target) in body_markers.iter().zip(&guiding.wrist_markers()) {
        wrist_sum = wrist_sum + m.distance_sq(V3::lift(target));
    }
    sum + wrist_sum.scale(lambda_wrist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{check_gradient, ScalarFn, Tape};
    use crate::geometry::{make_box, make_box_centered, Mat3, PlaneReflection, RigidTransform};
    use crate::hand::synthesize_for_object;
    use crate::palm::DEFAULT_CLEARANCE;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn lifted<R: Real>(points: &[Vec3]) -> Vec<V3<R>> {
        points.iter().map(|&p| V3::lift(p)).collect()
    }

    // ---------------------------------------------------------------- ground

    #[test]
    fn grounded_body_has_exactly_zero_ground_loss() {
        let pts = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.1, 0.0, 0.4),
            Vec3::new(0.0, 0.2, 1.3),
        ];
        let branch = GroundBranch::classify(&[0.0, 0.4, 1.3]);
        assert_eq!(branch, GroundBranch::Contact);
        let l: f64 = loss_ground(&lifted(&pts), branch, 1.0, 0.15);
        assert_eq!(l, 0.0);
    }

    #[test]
    fn single_buried_point_contributes_squared_tanh() {
        let pts = vec![
            Vec3::new(0.0, 0.0, -0.15),
            Vec3::new(0.1, 0.0, 0.0),
            Vec3::new(0.0, 0.2, 0.9),
            Vec3::new(0.3, 0.2, 0.6),
        ];
        let heights: Vec<f64> = pts.iter().map(|p| p.z).collect();
        let branch = GroundBranch::classify(&heights);
        let l: f64 = loss_ground(&lifted(&pts), branch, 1.0, 0.15);
        // One point at h = −0.15 contributes tanh(−1)² = 0.580026 before
        // averaging over the four points.
        let expect = 0.580026;
        assert!((l * pts.len() as f64 - expect).abs() < 1e-6, "got {}", l * 4.0);
    }

    #[test]
    fn floating_body_pays_its_lowest_height() {
        let pts = vec![Vec3::new(0.0, 0.0, 0.9), Vec3::new(0.1, 0.0, 0.2), Vec3::new(0.0, 0.2, 0.5)];
        let heights: Vec<f64> = pts.iter().map(|p| p.z).collect();
        let branch = GroundBranch::classify(&heights);
        assert_eq!(branch, GroundBranch::Floating(1));
        let l: f64 = loss_ground(&lifted(&pts), branch, 1.0, 0.15);
        assert!((l - 0.2).abs() < 1e-12);
    }

    // ----------------------------------------------------------- penetration

    #[test]
    fn body_outside_receptacle_costs_nothing() {
        let receptacle = IndexedMesh::new(make_box(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0)));
        let pts = vec![Vec3::new(2.0, 0.0, 0.5), Vec3::new(3.0, 1.0, 2.0)];
        let prox = vec![Vec3::new(2.0, 0.0, 1.5), Vec3::new(3.0, 1.0, 3.0)];
        let ctx = PenetrationContext::build(&receptacle, &pts, &prox).unwrap();
        assert!(!ctx.inside.iter().any(|&b| b));
        assert!(!ctx.disconnected.iter().any(|&b| b));
        let l: f64 = loss_penetration(&lifted(&pts), &ctx);
        assert_eq!(l, 0.0);
    }

    #[test]
    fn one_point_three_cm_inside_a_cube_costs_depth_over_n() {
        let receptacle = IndexedMesh::new(make_box(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0)));
        // One point 3 cm inside the x = 1 face, three clearly outside.
        let pts = vec![
            Vec3::new(0.97, 0.5, 0.5),
            Vec3::new(1.4, 0.5, 0.5),
            Vec3::new(1.6, 0.2, 0.8),
            Vec3::new(2.0, 0.9, 0.1),
        ];
        // Proximal joints right next to each point: nothing disconnected.
        let prox: Vec<Vec3> = pts.iter().map(|p| *p + Vec3::new(0.01, 0.0, 0.0)).collect();
        let ctx = PenetrationContext::build(&receptacle, &pts, &prox).unwrap();
        assert!(ctx.inside[0] && !ctx.inside[1] && !ctx.inside[2] && !ctx.inside[3]);
        assert!(!ctx.disconnected.iter().any(|&b| b));
        let l: f64 = loss_penetration(&lifted(&pts), &ctx);
        assert!((l - 0.03 / 4.0).abs() < 1e-9, "got {l}");
    }

    #[test]
    fn forearm_through_panel_marks_exactly_the_far_points_disconnected() {
        // A thin vertical panel; a "bone" whose proximal joint sits on the
        // near side with sample points marching through to the far side.
        let panel = IndexedMesh::new(make_box_centered(
            Vec3::new(0.5, 0.0, 0.5),
            Vec3::new(0.02, 1.0, 1.0),
        ));
        let joint = Vec3::new(0.0, 0.0, 0.5);
        let pts: Vec<Vec3> =
            (0..20).map(|i| Vec3::new(0.1 + 0.04 * i as f64, 0.0, 0.5)).collect();
        let prox = vec![joint; pts.len()];
        let ctx = PenetrationContext::build(&panel, &pts, &prox).unwrap();

        // Brute-force oracle: a far-side point is outside the panel with
        // x beyond the panel's far face.
        for (i, &p) in pts.iter().enumerate() {
            let inside_oracle = (p.x - 0.5).abs() < 0.01;
            assert_eq!(ctx.inside[i], inside_oracle, "inside flag at {i}");
            let disconnected_oracle = !inside_oracle && p.x > 0.51;
            assert_eq!(ctx.disconnected[i], disconnected_oracle, "disconnected flag at {i}");
        }
        // And the disconnected points pull back toward the panel.
        let l: f64 = loss_penetration(&lifted(&pts), &ctx);
        assert!(l > 0.0);
    }

    // ------------------------------------------------------------------ gaze

    #[test]
    fn collinear_gaze_is_exactly_zero_with_zero_gradient() {
        let a = Vec3::new(0.0, 0.0, 1.6);
        let b = Vec3::new(0.2, 0.0, 1.6);
        let o = Vec3::new(1.7, 0.0, 1.6); // ahead on the same line

        let tape = Tape::new();
        let av = V3::new(tape.var(a.x), tape.var(a.y), tape.var(a.z));
        let bv = V3::new(tape.var(b.x), tape.var(b.y), tape.var(b.z));
        let l = loss_gaze(av, bv, o);
        assert_eq!(l.value(), 0.0);
        let g = tape.backward(l);
        for v in [av.x, av.y, av.z, bv.x, bv.y, bv.z] {
            assert_eq!(g.wrt(v), 0.0, "flat band must zero the gradient");
        }
    }

    #[test]
    fn right_angle_geometry_matches_the_analytic_triangle() {
        // A at origin, B one unit along x, O above B: the rays O−A and O−B
        // subtend atan(1/1) = 45°.
        let a = Vec3::ZERO;
        let b = Vec3::new(1.0, 0.0, 0.0);
        let o = Vec3::new(1.0, 1.0, 0.0);
        let l: f64 = loss_gaze(V3::lift(a), V3::lift(b), o);
        assert!((l - std::f64::consts::FRAC_PI_4).abs() < 1e-9);
    }

    #[test]
    fn receding_target_shrinks_the_gaze_angle_monotonically() {
        let a = Vec3::new(0.0, 0.1, 1.5);
        let b = Vec3::new(0.1, 0.12, 1.52);
        let gaze = (b - a).normalized();
        let mut last = f64::INFINITY;
        for k in 0..8 {
            let o = b + gaze * (0.2 * 2.0_f64.powi(k)) + Vec3::new(0.0, 0.05, 0.0);
            let l: f64 = loss_gaze(V3::lift(a), V3::lift(b), o);
            assert!(l < last, "angle should shrink as the target recedes");
            last = l;
        }
    }

    // ------------------------------------------------------------------ pose

    #[test]
    fn pose_loss_matches_sum_of_squares_oracle() {
        let mut rng = StdRng::seed_from_u64(5);
        let reference: Vec<Vec3> = (0..21)
            .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        // Identical → 0.
        let zero: f64 = loss_pose(&lifted(&reference), &reference);
        assert_eq!(zero, 0.0);
        // One joint perturbed by norm 0.1 → 0.01.
        let mut one = reference.clone();
        one[7] = one[7] + Vec3::new(0.1, 0.0, 0.0);
        let l: f64 = loss_pose(&lifted(&one), &reference);
        assert!((l - 0.01).abs() < 1e-12);
        // Random perturbation matches the independent accumulation.
        let perturbed: Vec<Vec3> = reference
            .iter()
            .map(|&r| r + Vec3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)))
            .collect();
        let l: f64 = loss_pose(&lifted(&perturbed), &reference);
        let oracle: f64 = perturbed
            .iter()
            .zip(&reference)
            .map(|(p, r)| (*p - *r).norm_sq())
            .sum();
        assert!((l - oracle).abs() < 1e-12);
    }

    // ------------------------------------------------------------------ tilt

    #[test]
    fn tilt_is_zero_for_the_reference_and_exact_for_a_constructed_lean() {
        let pelvis = Vec3::new(0.3, -0.1, 0.95);
        let feet = Vec3::new(0.3, -0.1, 0.08);
        let v = (pelvis - feet).normalized();
        let zero: f64 = loss_tilt(V3::lift(pelvis), V3::lift(feet), v);
        assert_eq!(zero, 0.0);

        // Lean the reference by exactly 10° about a horizontal axis.
        let lean = Mat3::rotation_axis_angle(Vec3::Y, 10.0_f64.to_radians()).mul_vec(v);
        let l: f64 = loss_tilt(V3::lift(pelvis), V3::lift(feet), lean);
        assert!((l - 10.0_f64.to_radians()).abs() < 1e-6);
    }

    #[test]
    fn pure_root_yaw_keeps_tilt_at_zero() {
        use crate::body::{reach_solve, Skeleton};
        use crate::body::skeleton::{L_ANKLE, PELVIS, R_ANKLE};
        use crate::scene::Handedness;

        let skel = Skeleton::default();
        let pose = reach_solve(
            &skel,
            Vec3::new(0.6, 0.1, 1.1),
            Vec3::new(0.9, 0.2, -0.3).normalized(),
            Handedness::Right,
        )
        .unwrap();
        let fk = pose.fk(&skel);
        let feet = (fk.joint_position[L_ANKLE].value() + fk.joint_position[R_ANKLE].value()) * 0.5;
        let reference = (fk.joint_position[PELVIS].value() - feet).normalized();

        let mut yawed = pose.clone();
        yawed.root_orientation = Vec3::new(0.0, 0.0, pose.root_orientation.z + 1.3);
        let fk2 = yawed.fk(&skel);
        let feet2 =
            (fk2.joint_position[L_ANKLE].value() + fk2.joint_position[R_ANKLE].value()) * 0.5;
        let l: f64 = loss_tilt(
            V3::lift(fk2.joint_position[PELVIS].value()),
            V3::lift(feet2),
            reference,
        );
        assert!(l < 1e-9, "pure yaw should not register as tilt, got {l}");
    }

    // ----------------------------------------------------------- hand match

    #[test]
    fn hand_match_is_zero_when_coincident_and_exact_for_a_shift() {
        let object = IndexedMesh::new(crate::geometry::make_icosphere(Vec3::new(0.4, 0.0, 0.9), 0.2, 2));
        let hand = synthesize_for_object(
            &object,
            Vec3::new(0.4, 0.0, 0.9),
            Vec3::new(1.0, 0.3, 0.2).normalized(),
            DEFAULT_CLEARANCE,
        )
        .unwrap();

        let patch: Vec<V3<f64>> = lifted(&hand.palm_patch);
        let markers = hand.wrist_markers();
        let markers_v = [V3::lift(markers[0]), V3::lift(markers[1])];
        let zero: f64 = loss_hand_match(&patch, &markers_v, &hand, 2.0);
        assert_eq!(zero, 0.0);

        // Shift the body palm 1 cm: 99 + 2 points at λ_wrist = 1 give
        // 101·(0.01)² = 0.0101.
        let shift = Vec3::new(0.0, 0.01, 0.0);
        let patch_shifted: Vec<V3<f64>> =
            hand.palm_patch.iter().map(|&p| V3::lift(p + shift)).collect();
        let markers_shifted = [V3::lift(markers[0] + shift), V3::lift(markers[1] + shift)];
        let l: f64 = loss_hand_match(&patch_shifted, &markers_shifted, &hand, 1.0);
        assert!((l - 0.0101).abs() < 1e-12, "got {l}");
    }

    #[test]
    fn hand_match_is_invariant_under_shared_rigid_motion() {
        let object = IndexedMesh::new(crate::geometry::make_icosphere(Vec3::new(0.4, 0.0, 0.9), 0.2, 2));
        let hand = synthesize_for_object(
            &object,
            Vec3::new(0.4, 0.0, 0.9),
            Vec3::new(0.2, -0.9, 0.4).normalized(),
            DEFAULT_CLEARANCE,
        )
        .unwrap();
        let shift = Vec3::new(0.013, -0.007, 0.004);
        let body_patch: Vec<Vec3> = hand.palm_patch.iter().map(|&p| p + shift).collect();
        let m = hand.wrist_markers();
        let body_markers = [m[0] + shift, m[1] + shift];

        let before: f64 = loss_hand_match(
            &lifted(&body_patch),
            &[V3::lift(body_markers[0]), V3::lift(body_markers[1])],
            &hand,
            2.0,
        );

        let rt = RigidTransform {
            rotation: Mat3::rotation_axis_angle(Vec3::new(0.3, 0.5, 0.8).normalized(), 1.1),
            translation: Vec3::new(-0.4, 0.25, 0.6),
        };
        let moved_hand = hand.transformed(&rt);
        let moved_patch: Vec<Vec3> = body_patch.iter().map(|&p| rt.apply(p)).collect();
        let moved_markers = [rt.apply(body_markers[0]), rt.apply(body_markers[1])];
        let after: f64 = loss_hand_match(
            &lifted(&moved_patch),
            &[V3::lift(moved_markers[0]), V3::lift(moved_markers[1])],
            &moved_hand,
            2.0,
        );
        assert!((before - after).abs() < 1e-9, "{before} vs {after}");
    }

    // ------------------------------------------------- gradient spot checks

    struct PenFn {
        ctx: PenetrationContext,
    }
    impl ScalarFn for PenFn {
        fn eval<R: Real>(&self, x: &[R]) -> R {
            let pts: Vec<V3<R>> =
                x.chunks_exact(3).map(|c| V3::new(c[0], c[1], c[2])).collect();
            loss_penetration(&pts, &self.ctx)
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let receptacle = IndexedMesh::new(make_box(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0)));
        let pts = vec![
            Vec3::new(0.95, 0.5, 0.5),
            Vec3::new(1.3, 0.4, 0.6),
            Vec3::new(0.5, 0.5, 1.2),
        ];
        let prox = vec![Vec3::new(1.5, 0.5, 0.5); 3];
        let ctx = PenetrationContext::build(&receptacle, &pts, &prox).unwrap();
        let x: Vec<f64> = pts.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
        let report = check_gradient(&PenFn { ctx }, &x, 1e-5);
        assert!(report.passes(1e-4, 1e-10), "penetration: {report:?}");

        struct GroundFn {
            branch: GroundBranch,
        }
        impl ScalarFn for GroundFn {
            fn eval<R: Real>(&self, x: &[R]) -> R {
                let pts: Vec<V3<R>> =
                    x.chunks_exact(3).map(|c| V3::new(c[0], c[1], c[2])).collect();
                loss_ground(&pts, self.branch, 1.0, 0.15)
            }
        }
        let x = [0.1, 0.2, -0.07, 0.4, 0.1, 0.3, 0.2, 0.0, 0.9];
        let report = check_gradient(&GroundFn { branch: GroundBranch::Contact }, &x, 1e-5);
        assert!(report.passes(1e-4, 1e-10), "ground: {report:?}");

        struct GazeFn {
            o: Vec3,
        }
        impl ScalarFn for GazeFn {
            fn eval<R: Real>(&self, x: &[R]) -> R {
                loss_gaze(V3::new(x[0], x[1], x[2]), V3::new(x[3], x[4], x[5]), self.o)
            }
        }
        let x = [0.0, 0.05, 1.6, 0.09, 0.03, 1.62];
        let report =
            check_gradient(&GazeFn { o: Vec3::new(0.8, -0.3, 1.2) }, &x, 1e-5);
        assert!(report.passes(1e-4, 1e-10), "gaze: {report:?}");

        struct TiltFn {
            reference: Vec3,
        }
        impl ScalarFn for TiltFn {
            fn eval<R: Real>(&self, x: &[R]) -> R {
                loss_tilt(V3::new(x[0], x[1], x[2]), V3::new(x[3], x[4], x[5]), self.reference)
            }
        }
        let x = [0.32, -0.08, 0.93, 0.29, -0.11, 0.07];
        let report = check_gradient(
            &TiltFn { reference: Vec3::new(0.05, -0.02, 0.99).normalized() },
            &x,
            1e-5,
        );
        assert!(report.passes(1e-4, 1e-10), "tilt: {report:?}");
    }

    #[test]
    fn mirror_consistency_of_penetration_context() {
        // Reflecting receptacle, points, and joints together reflects the
        // context verbatim (sets, not just counts).
        let receptacle = IndexedMesh::new(make_box_centered(
            Vec3::new(0.4, 0.1, 0.5),
            Vec3::new(0.3, 0.4, 1.0),
        ));
        let plane = PlaneReflection {
            point: Vec3::new(-0.2, 0.3, 0.0),
            normal: Vec3::new(0.8, 0.6, 0.0),
        };
        let mut rng = StdRng::seed_from_u64(21);
        let pts: Vec<Vec3> = (0..50)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-0.3..1.0),
                    rng.gen_range(-0.5..0.7),
                    rng.gen_range(0.0..1.2),
                )
            })
            .collect();
        let prox: Vec<Vec3> = pts.iter().map(|&p| p + Vec3::new(0.0, 0.0, 0.3)).collect();
        let ctx = PenetrationContext::build(&receptacle, &pts, &prox).unwrap();

        let mirrored = IndexedMesh::new(crate::geometry::mirror_mesh(&receptacle.mesh, &plane));
        let pts_m: Vec<Vec3> = pts.iter().map(|&p| plane.reflect_point(p)).collect();
        let prox_m: Vec<Vec3> = prox.iter().map(|&p| plane.reflect_point(p)).collect();
        let ctx_m = PenetrationContext::build(&mirrored, &pts_m, &prox_m).unwrap();

        assert_eq!(ctx.inside, ctx_m.inside);
        assert_eq!(ctx.disconnected, ctx_m.disconnected);
        let a: f64 = loss_penetration(&lifted(&pts), &ctx);
        let b: f64 = loss_penetration(&lifted(&pts_m), &ctx_m);
        assert!((a - b).abs() < 1e-9);
    }
}
