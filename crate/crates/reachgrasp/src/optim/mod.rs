//! Two-stage gradient refinement of a reaching body pose toward a guiding
//! hand, against ground and receptacle constraints.
//!
//! Stage 1 runs Adam over the full variable set (root translation, root
//! orientation, all joint rotations); stage 2 restarts Adam over only the
//! matching arm's shoulder/elbow/wrist rotations with the receptacle
//! penetration term dropped from the descent objective. Everything is
//! deterministic: no randomness, order-preserving parallel queries, and a
//! sequential accumulation order for every sum.

pub mod losses;

use crate::autodiff::{Real, Tape, Var, V3};
use crate::body::fk::{
    body_palm_patch, body_wrist_markers, forward_kinematics, landmark_positions, surface_points,
    PoseVars,
};
use crate::body::pose::BodyPose;
use crate::body::skeleton::{Skeleton, JOINT_COUNT, L_ANKLE, PELVIS, R_ANKLE};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::hand::GuidingHand;
use crate::scene::Scene;
use losses::{
    loss_gaze, loss_ground, loss_hand_match, loss_penetration, loss_pose, loss_tilt, GroundBranch,
    PenetrationContext,
};
use serde::{Deserialize, Serialize};

/// Term weights of the refinement objective. All default weights are chosen
/// so the weighted terms are the same order of magnitude at a pre-translated
/// starting pose.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossWeights {
    /// Palm-patch / wrist-marker matching.
    pub hand_match: f64,
    /// Pose prior toward the reaching pose.
    pub pose: f64,
    /// Gaze alignment toward the object centroid.
    pub gaze: f64,
    /// Ground contact/floating penalty.
    pub ground: f64,
    /// Receptacle penetration (stage 1 only).
    pub penetration: f64,
    /// Upright (feet-to-pelvis tilt) regularizer.
    pub tilt: f64,
    /// Weight of the wrist markers inside the hand-match term.
    pub wrist: f64,
    /// Ground-term scale β₁.
    pub ground_beta1: f64,
    /// Ground-term softness β₂ (meters).
    pub ground_beta2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            hand_match: 10.0,
            pose: 1.0,
            gaze: 0.5,
            ground: 5.0,
            penetration: 5.0,
            tilt: 1.0,
            wrist: 2.0,
            ground_beta1: 1.0,
            ground_beta2: 0.15,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.hand_match,
            self.pose,
            self.gaze,
            self.ground,
            self.penetration,
            self.tilt,
            self.wrist,
            self.ground_beta1,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("loss weights must be finite and >= 0".into()));
        }
        if !(self.ground_beta2 > 0.0) {
            return Err(Error::Config("ground beta2 must be > 0".into()));
        }
        Ok(())
    }
}

/// Adam schedule for the two refinement stages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub stage1_iters: usize,
    pub stage2_iters: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Distance of the initial root retreat (meters), applied by the
    /// pipeline via [`pre_translate`] before optimization starts.
    pub pre_translation: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 0.01,
            stage1_iters: 800,
            stage2_iters: 700,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            pre_translation: 1.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if self.stage1_iters + self.stage2_iters == 0 {
            return Err(Error::Config("at least one iteration required".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(Error::Config("adam epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// Raw (unweighted) loss term values at one iterate, plus the weighted
/// total. The total always includes every term, even during stage 2 when
/// the descent objective omits the penetration term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationLosses {
    pub penetration: f64,
    pub ground: f64,
    pub gaze: f64,
    pub pose: f64,
    pub tilt: f64,
    pub hand_match: f64,
    pub total: f64,
}

/// Per-iteration loss record and the refined pose. Row `k` holds the loss
/// values at the iterate entering iteration `k` (row 0 is the starting
/// pose); the final pose has received one more update than the last row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossTrace {
    pub rows: Vec<IterationLosses>,
    pub final_pose: BodyPose,
}

impl LossTrace {
    pub fn start_total(&self) -> f64 {
        self.rows.first().map_or(f64::NAN, |r| r.total)
    }

    pub fn end_total(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.total)
    }

    /// CSV rendering: one header plus one row per iteration.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("iteration,penetration,ground,gaze,pose,tilt,hand_match,total\n");
        for (i, r) in self.rows.iter().enumerate() {
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                i, r.penetration, r.ground, r.gaze, r.pose, r.tilt, r.hand_match, r.total
            ));
        }
        out
    }
}

/// Retreat the root along the floor projection of `-d_arm` (away from the
/// object) by `distance`, keeping height. Returns the moved pose and whether
/// the translation was applied; a near-vertical `d_arm` (horizontal norm
/// below 1e-6) skips the move.
pub fn pre_translate(pose: &BodyPose, d_arm: Vec3, distance: f64) -> (BodyPose, bool) {
    let h = Vec3::new(d_arm.x, d_arm.y, 0.0);
    let n = h.norm();
    if n < 1e-6 {
        return (pose.clone(), false);
    }
    let mut out = pose.clone();
    out.root_translation = out.root_translation - h * (distance / n);
    (out, true)
}

/// Inputs that stay fixed across iterations.
struct Objective<'a> {
    scene: &'a Scene,
    skel: &'a Skeleton,
    hand: &'a GuidingHand,
    weights: &'a LossWeights,
    /// Reference joint rotations (pose prior target), 21 entries.
    ref_rotations: &'a [Vec3],
    /// Reference feet-center→pelvis direction (tilt target).
    ref_up: Vec3,
    /// Per surface sample: index of its bone's proximal joint.
    proximal: &'a [usize],
}

/// Discrete per-iterate context handled as constants by differentiation.
struct DetachedCtx {
    pen: PenetrationContext,
    ground: GroundBranch,
}

/// The six raw term values/expressions at one iterate.
struct Terms<R> {
    penetration: R,
    ground: R,
    gaze: R,
    pose: R,
    tilt: R,
    hand_match: R,
}

impl<R: Real> Terms<R> {
    fn weighted_total(&self, w: &LossWeights, include_penetration: bool) -> R {
        let mut total = self.ground.scale(w.ground)
            + self.gaze.scale(w.gaze)
            + self.pose.scale(w.pose)
            + self.tilt.scale(w.tilt)
            + self.hand_match.scale(w.hand_match);
        if include_penetration {
            total = total + self.penetration.scale(w.penetration);
        }
        total
    }

    fn named(&self) -> [(&'static str, R); 6] {
        [
            ("penetration", self.penetration),
            ("ground", self.ground),
            ("gaze", self.gaze),
            ("pose", self.pose),
            ("tilt", self.tilt),
            ("hand_match", self.hand_match),
        ]
    }
}

impl Objective<'_> {
    /// Classify the discrete context at a plain-valued pose.
    fn build_ctx(&self, vars: &PoseVars<f64>) -> Result<DetachedCtx> {
        let fk = forward_kinematics(self.skel, vars);
        let surface: Vec<Vec3> =
            surface_points(self.skel, &fk, vars.beta).iter().map(|p| p.value()).collect();
        let prox: Vec<Vec3> =
            self.proximal.iter().map(|&j| fk.joint_position[j].value()).collect();
        let pen = PenetrationContext::build(&self.scene.receptacle, &surface, &prox)?;
        let heights: Vec<f64> = surface.iter().map(|p| p.z).collect();
        let ground = GroundBranch::classify(&heights);
        Ok(DetachedCtx { pen, ground })
    }

    /// Evaluate all six raw terms at `vars` with the discrete context
    /// frozen. Generic so the same expression graph serves plain values,
    /// tape gradients, and finite-difference probes.
    fn eval_terms<R: Real>(&self, vars: &PoseVars<R>, ctx: &DetachedCtx) -> Terms<R> {
        let fk = forward_kinematics(self.skel, vars);
        let surface = surface_points(self.skel, &fk, vars.beta);

        let penetration = loss_penetration(&surface, &ctx.pen);
        let ground = loss_ground(
            &surface,
            ctx.ground,
            self.weights.ground_beta1,
            self.weights.ground_beta2,
        );
        let lm = landmark_positions(self.skel, &fk, vars.beta);
        let gaze = loss_gaze(lm.head_back, lm.glabella, self.scene.centroid);
        let pose = loss_pose(&vars.rotations[1..], self.ref_rotations);
        let feet = (fk.joint_position[L_ANKLE] + fk.joint_position[R_ANKLE]).scale_f64(0.5);
        let tilt = loss_tilt(fk.joint_position[PELVIS], feet, self.ref_up);
        let patch = body_palm_patch(&fk, self.hand.handedness);
        let markers = body_wrist_markers(&fk, self.hand.handedness);
        let hand_match = loss_hand_match(&patch, &markers, self.hand, self.weights.wrist);

        Terms { penetration, ground, gaze, pose, tilt, hand_match }
    }
}

/// Which parameters a stage exposes to the optimizer.
enum VarSet {
    /// Root translation + all rotation vectors: 3 + 3·JOINT_COUNT values.
    Full,
    /// Rotation vectors of the given joints only (arm refinement).
    Joints(Vec<usize>),
}

impl VarSet {
    fn len(&self) -> usize {
        match self {
            VarSet::Full => 3 + 3 * JOINT_COUNT,
            VarSet::Joints(js) => 3 * js.len(),
        }
    }

    /// Read the stage's parameter vector out of a full pose.
    fn extract(&self, vars: &PoseVars<f64>) -> Vec<f64> {
        match self {
            VarSet::Full => {
                let mut x = vec![vars.root_translation.x, vars.root_translation.y, vars.root_translation.z];
                for r in &vars.rotations {
                    x.extend_from_slice(&[r.x, r.y, r.z]);
                }
                x
            }
            VarSet::Joints(js) => {
                let mut x = Vec::with_capacity(3 * js.len());
                for &j in js {
                    let r = vars.rotations[j];
                    x.extend_from_slice(&[r.x, r.y, r.z]);
                }
                x
            }
        }
    }

    /// Write the stage's parameter vector back into a full pose.
    fn apply(&self, x: &[f64], base: &mut PoseVars<f64>) {
        assert_eq!(x.len(), self.len());
        match self {
            VarSet::Full => {
                base.root_translation = V3::new(x[0], x[1], x[2]);
                for (j, c) in x[3..].chunks_exact(3).enumerate() {
                    base.rotations[j] = V3::new(c[0], c[1], c[2]);
                }
            }
            VarSet::Joints(js) => {
                for (k, &j) in js.iter().enumerate() {
                    base.rotations[j] = V3::new(x[3 * k], x[3 * k + 1], x[3 * k + 2]);
                }
            }
        }
    }

    /// Build tape-tracked pose variables: stage parameters become tape
    /// leaves, everything else is lifted as a constant (and therefore has
    /// a structurally zero gradient).
    fn tape_vars<'t>(
        &self,
        tape: &'t Tape,
        x: &[f64],
        base: &PoseVars<f64>,
    ) -> (PoseVars<Var<'t>>, Vec<Var<'t>>) {
        let leaves: Vec<Var<'t>> = x.iter().map(|&v| tape.var(v)).collect();
        let mut vars = PoseVars {
            root_translation: V3::lift(base.root_translation.value()),
            rotations: base
                .rotations
                .iter()
                .map(|r| V3::lift(r.value()))
                .collect(),
            beta: Var::lift(base.beta),
        };
        match self {
            VarSet::Full => {
                vars.root_translation = V3::new(leaves[0], leaves[1], leaves[2]);
                for (j, c) in leaves[3..].chunks_exact(3).enumerate() {
                    vars.rotations[j] = V3::new(c[0], c[1], c[2]);
                }
            }
            VarSet::Joints(js) => {
                for (k, &j) in js.iter().enumerate() {
                    vars.rotations[j] = V3::new(leaves[3 * k], leaves[3 * k + 1], leaves[3 * k + 2]);
                }
            }
        }
        (vars, leaves)
    }
}

/// Refine `start` toward the guiding hand. `reference` is the reaching pose
/// the prior terms pull back to (pose prior and upright direction); pass the
/// un-translated reaching pose when starting from a pre-translated one.
/// Returns the refined pose and the full loss trace.
pub fn optimize(
    scene: &Scene,
    skel: &Skeleton,
    start: &BodyPose,
    reference: &BodyPose,
    hand: &GuidingHand,
    weights: &LossWeights,
    config: &OptimizerConfig,
) -> Result<(BodyPose, LossTrace)> {
    weights.validate()?;
    config.validate()?;
    if (start.beta - reference.beta).abs() > 1e-12 {
        return Err(Error::Config(
            "start and reference poses must share the same stature scale".into(),
        ));
    }

    let ref_fk = reference.fk(skel);
    let feet = (ref_fk.joint_position[L_ANKLE].value() + ref_fk.joint_position[R_ANKLE].value()) * 0.5;
    let ref_up = (ref_fk.joint_position[PELVIS].value() - feet).normalized();
    let proximal: Vec<usize> = skel.surface.iter().map(|s| skel.parent[s.bone]).collect();

    let objective = Objective {
        scene,
        skel,
        hand,
        weights,
        ref_rotations: &reference.joint_rotations,
        ref_up,
        proximal: &proximal,
    };

    let mut pose_vars = start.to_vars();
    let mut rows = Vec::with_capacity(config.stage1_iters + config.stage2_iters);

    let (_, _, s_elbow, s_wrist) = Skeleton::side_joints(hand.handedness);
    let s_shoulder = skel.parent[s_elbow];
    run_stage(
        &objective,
        &mut pose_vars,
        VarSet::Full,
        config.stage1_iters,
        0,
        true,
        config,
        &mut rows,
    )?;
    run_stage(
        &objective,
        &mut pose_vars,
        VarSet::Joints(vec![s_shoulder, s_elbow, s_wrist]),
        config.stage2_iters,
        config.stage1_iters,
        false,
        config,
        &mut rows,
    )?;

    let final_pose = BodyPose::from_vars(&pose_vars);
    let trace = LossTrace { rows, final_pose: final_pose.clone() };
    Ok((final_pose, trace))
}

#[allow(clippy::too_many_arguments)]
fn run_stage(
    objective: &Objective<'_>,
    pose_vars: &mut PoseVars<f64>,
    set: VarSet,
    iters: usize,
    global_offset: usize,
    include_penetration: bool,
    config: &OptimizerConfig,
    rows: &mut Vec<IterationLosses>,
) -> Result<()> {
    let n = set.len();
    let mut x = set.extract(pose_vars);
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let tape = Tape::new();

    for iter in 0..iters {
        let global_iter = global_offset + iter;
        set.apply(&x, pose_vars);
        let ctx = objective.build_ctx(pose_vars)?;

        tape.clear();
        let (tracked, leaves) = set.tape_vars(&tape, &x, pose_vars);
        let terms = objective.eval_terms(&tracked, &ctx);

        for (name, term) in terms.named() {
            if !term.value().is_finite() {
                return Err(Error::OptimAbort {
                    iteration: global_iter,
                    term: name.into(),
                    reason: format!("loss value {}", term.value()),
                });
            }
        }
        let descent_total = terms.weighted_total(objective.weights, include_penetration);
        let full_total = terms
            .weighted_total(objective.weights, true)
            .value();
        rows.push(IterationLosses {
            penetration: terms.penetration.value(),
            ground: terms.ground.value(),
            gaze: terms.gaze.value(),
            pose: terms.pose.value(),
            tilt: terms.tilt.value(),
            hand_match: terms.hand_match.value(),
            total: full_total,
        });

        let grads = tape.backward(descent_total);
        let mut bad = false;
        for (g, &leaf) in grad.iter_mut().zip(&leaves) {
            *g = grads.wrt(leaf);
            bad |= !g.is_finite();
        }
        if bad {
            // Attribute the failure: re-run the backward sweep per term and
            // name the first one with a non-finite partial.
            for (name, term) in terms.named() {
                let per = tape.backward(term);
                if leaves.iter().any(|&l| !per.wrt(l).is_finite()) {
                    return Err(Error::OptimAbort {
                        iteration: global_iter,
                        term: name.into(),
                        reason: "non-finite gradient".into(),
                    });
                }
            }
            return Err(Error::OptimAbort {
                iteration: global_iter,
                term: "total".into(),
                reason: "non-finite gradient".into(),
            });
        }

        // Adam with bias correction; moments restart at each stage.
        let t = (iter + 1) as i32;
        let bc1 = 1.0 - config.adam_beta1.powi(t);
        let bc2 = 1.0 - config.adam_beta2.powi(t);
        for i in 0..n {
            m[i] = config.adam_beta1 * m[i] + (1.0 - config.adam_beta1) * grad[i];
            v[i] = config.adam_beta2 * v[i] + (1.0 - config.adam_beta2) * grad[i] * grad[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            x[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_epsilon);
        }
    }

    set.apply(&x, pose_vars);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::fk::Fk;
    use crate::body::reach::reach_solve;
    use crate::body::skeleton::{L_SHOULDER, R_ELBOW, R_SHOULDER, R_WRIST};
    use crate::geometry::{make_box_centered, make_icosphere, Mat3, TriMesh};
    use crate::hand::synthesize_guiding_hand;
    use crate::hand::GraspDirection;
    use crate::palm;
    use crate::scene::Handedness;

    /// Sphere resting on a box: the standard small test scene.
    fn sphere_on_table() -> Scene {
        let object = make_icosphere(Vec3::new(0.55, 0.0, 0.82), 0.12, 2);
        let table = make_box_centered(Vec3::new(0.55, 0.0, 0.35), Vec3::new(0.6, 0.8, 0.7));
        Scene::from_parts(object, table, Vec::new(), 7, Handedness::Right).unwrap()
    }

    /// Hand + start/reference poses for a scene, conditioned on one shared
    /// outward direction exactly like the synthesis pipeline.
    fn conditioned_setup(scene: &Scene, d_out: Vec3) -> (GuidingHand, BodyPose, BodyPose) {
        let skel = Skeleton::default();
        let hand = synthesize_guiding_hand(
            scene,
            &GraspDirection { d_grasp: d_out, handedness: Handedness::Right },
        )
        .unwrap();
        let reference =
            reach_solve(&skel, hand.wrist_position, -d_out, Handedness::Right).unwrap();
        let (start, moved) = pre_translate(&reference, -d_out, 1.0);
        assert!(moved);
        (hand, start, reference)
    }

    fn guiding_hand_from_body(skel: &Skeleton, fk: &Fk<f64>, hand: Handedness) -> GuidingHand {
        let wrist = fk.joint_position[R_WRIST].value();
        let rot = fk.joint_rotation[R_WRIST].value();
        let thumb = rot.mul_vec(Skeleton::wrist_thumb_axis(hand));
        let finger = rot.mul_vec(Skeleton::wrist_finger_axis(hand));
        let normal = rot.mul_vec(Skeleton::wrist_palm_normal(hand));
        let out = rot.mul_vec(Skeleton::wrist_palm_out_dir(hand));
        let patch: Vec<Vec3> = body_palm_patch(fk, hand).iter().map(|p| p.value()).collect();
        let tips: Vec<Vec3> = palm::fingertip_offsets()
            .iter()
            .map(|&(a, b)| wrist + thumb * a + finger * b)
            .collect();
        let _ = skel;
        GuidingHand {
            handedness: hand,
            d_grasp: out,
            wrist_position: wrist,
            palm_normal: normal,
            finger_axis: finger,
            thumb_axis: thumb,
            outer_palm: [wrist, wrist + out * palm::PALM_ANCHOR_OFFSET],
            palm_patch: patch,
            fingertip_targets: tips,
            f_inter: vec![Vec3::ZERO; palm::PATCH_COUNT],
        }
    }

    #[test]
    fn pre_translate_moves_against_the_floor_projection() {
        let skel = Skeleton::default();
        let pose = BodyPose::rest(&skel);

        let (moved, applied) = pre_translate(&pose, Vec3::new(1.0, 0.0, 0.0), 1.0);
        assert!(applied);
        assert_eq!(moved.root_translation.x, pose.root_translation.x - 1.0);
        assert_eq!(moved.root_translation.z, pose.root_translation.z);

        let (unmoved, applied) = pre_translate(&pose, Vec3::new(0.0, 0.0, 1.0), 1.0);
        assert!(!applied);
        assert_eq!(unmoved.root_translation, pose.root_translation);

        let d = Vec3::new(1.0, 0.0, 1.0) * std::f64::consts::FRAC_1_SQRT_2;
        let (slanted, applied) = pre_translate(&pose, d, 1.0);
        assert!(applied);
        assert!((slanted.root_translation.x - (pose.root_translation.x - 1.0)).abs() < 1e-15);
        assert_eq!(slanted.root_translation.y, pose.root_translation.y);
        assert_eq!(slanted.root_translation.z, pose.root_translation.z);
    }

    #[test]
    fn coincident_guiding_hand_leaves_the_pose_still() {
        // Build a pose, then hand it a guiding hand that coincides with its
        // own palm, an object centroid exactly on its gaze line, and a
        // receptacle far away: every term starts at its flat minimum, so
        // all gradients are exactly zero and the pose must not move.
        let skel = Skeleton::default();
        let pose = reach_solve(
            &skel,
            Vec3::new(0.45, -0.1, 1.05),
            Vec3::new(0.95, 0.1, -0.25).normalized(),
            Handedness::Right,
        )
        .unwrap();
        let fk = pose.fk(&skel);
        let hand = guiding_hand_from_body(&skel, &fk, Handedness::Right);

        // Place the object centroid on the head_back→glabella ray so the
        // gaze term sits in its flat band.
        let lm = landmark_positions(&skel, &fk, pose.beta);
        let a = lm.head_back.value();
        let b = lm.glabella.value();
        let o = b + (b - a).normalized() * 0.9;
        let object = make_icosphere(o, 0.05, 1);
        let receptacle = make_box_centered(Vec3::new(5.0, 5.0, 0.5), Vec3::new(1.0, 1.0, 1.0));
        let scene =
            Scene::from_parts(object, receptacle, Vec::new(), 3, Handedness::Right).unwrap();
        // Icosphere vertex centroids match their centers to rounding; the
        // flat band around the exact optimum absorbs that.
        assert!(scene.centroid.distance(o) < 1e-12);

        let (refined, trace) = optimize(
            &scene,
            &skel,
            &pose,
            &pose,
            &hand,
            &LossWeights::default(),
            &OptimizerConfig::default(),
        )
        .unwrap();

        let before = pose.to_vars();
        let after = refined.to_vars();
        let mut drift: f64 = (after.root_translation - before.root_translation).norm();
        for (a, b) in after.rotations.iter().zip(&before.rotations) {
            drift = drift.max((*a - *b).norm());
        }
        assert!(drift < 1e-6, "pose drifted {drift} from a flat minimum");
        assert_eq!(trace.rows.len(), 1500);
        assert!(trace.start_total() < 1e-6, "start {:e}", trace.start_total());
    }

    #[test]
    fn stage_two_touches_only_the_matching_arm() {
        let scene = sphere_on_table();
        let (hand, start, reference) =
            conditioned_setup(&scene, Vec3::new(0.9, -0.25, 0.35).normalized());
        let skel = Skeleton::default();
        let config = OptimizerConfig { stage1_iters: 0, stage2_iters: 40, ..Default::default() };
        let (refined, trace) = optimize(
            &scene,
            &skel,
            &start,
            &reference,
            &hand,
            &LossWeights::default(),
            &config,
        )
        .unwrap();
        assert_eq!(trace.rows.len(), 40);

        // Bitwise equality for everything except the right arm chain.
        assert_eq!(refined.root_translation, start.root_translation);
        assert_eq!(refined.root_orientation, start.root_orientation);
        assert_eq!(refined.beta, start.beta);
        let arm = [R_SHOULDER, R_ELBOW, R_WRIST];
        for j in 1..crate::body::skeleton::JOINT_COUNT {
            if arm.contains(&j) {
                continue;
            }
            assert_eq!(
                refined.rotation_of(j),
                start.rotation_of(j),
                "joint {j} moved during arm-only refinement"
            );
        }
        // The arm itself did move (it is being pulled toward the hand).
        assert!(arm.iter().any(|&j| refined.rotation_of(j) != start.rotation_of(j)));
        assert!(refined.rotation_of(L_SHOULDER) == start.rotation_of(L_SHOULDER));
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let scene = sphere_on_table();
        let (hand, start, reference) =
            conditioned_setup(&scene, Vec3::new(0.8, 0.3, 0.45).normalized());
        let skel = Skeleton::default();
        let config = OptimizerConfig { stage1_iters: 30, stage2_iters: 20, ..Default::default() };
        let run = || {
            optimize(
                &scene,
                &skel,
                &start,
                &reference,
                &hand,
                &LossWeights::default(),
                &config,
            )
            .unwrap()
        };
        let (pose_a, trace_a) = run();
        let (pose_b, trace_b) = run();

        assert_eq!(trace_a.rows.len(), trace_b.rows.len());
        for (ra, rb) in trace_a.rows.iter().zip(&trace_b.rows) {
            assert_eq!(ra.total.to_bits(), rb.total.to_bits());
            assert_eq!(ra.penetration.to_bits(), rb.penetration.to_bits());
            assert_eq!(ra.hand_match.to_bits(), rb.hand_match.to_bits());
        }
        let va = pose_a.to_vars();
        let vb = pose_b.to_vars();
        assert_eq!(va.root_translation.value(), vb.root_translation.value());
        for (a, b) in va.rotations.iter().zip(&vb.rotations) {
            assert_eq!(a.value(), b.value());
        }
        assert_eq!(trace_a.to_csv(), trace_b.to_csv());
    }

    #[test]
    fn refinement_reduces_the_total_loss_on_a_real_scene() {
        let scene = sphere_on_table();
        let (hand, start, reference) =
            conditioned_setup(&scene, Vec3::new(1.0, 0.15, 0.4).normalized());
        let skel = Skeleton::default();
        let config = OptimizerConfig { stage1_iters: 250, stage2_iters: 80, ..Default::default() };
        let (refined, trace) = optimize(
            &scene,
            &skel,
            &start,
            &reference,
            &hand,
            &LossWeights::default(),
            &config,
        )
        .unwrap();

        assert_eq!(trace.rows.len(), 330);
        assert!(
            trace.end_total() < trace.start_total(),
            "total loss should drop: {} -> {}",
            trace.start_total(),
            trace.end_total()
        );
        // The dominant start cost is the 1 m retreat showing up in the
        // hand-match term; most of it must be recovered.
        assert!(trace.end_total() < 0.2 * trace.start_total());

        // The refined wrist should be far closer to the guiding wrist than
        // the pre-translated start was.
        let fk = refined.fk(&skel);
        let start_fk = start.fk(&skel);
        let wrist_err = fk.joint_position[R_WRIST].value().distance(hand.wrist_position);
        let start_err = start_fk.joint_position[R_WRIST].value().distance(hand.wrist_position);
        assert!(wrist_err < 0.25 * start_err, "{wrist_err} vs start {start_err}");
    }

    #[test]
    fn non_finite_state_aborts_with_iteration_and_term() {
        let scene = sphere_on_table();
        let (hand, start, reference) =
            conditioned_setup(&scene, Vec3::new(0.9, 0.0, 0.44).normalized());
        let skel = Skeleton::default();
        let mut poisoned = start.clone();
        poisoned.root_translation = Vec3::new(1e300, 0.0, 0.0);
        let err = optimize(
            &scene,
            &skel,
            &poisoned,
            &reference,
            &hand,
            &LossWeights::default(),
            &OptimizerConfig::default(),
        )
        .unwrap_err();
        match err {
            Error::OptimAbort { iteration, term, .. } => {
                assert_eq!(iteration, 0);
                assert_eq!(term, "gaze");
            }
            other => panic!("expected OptimAbort, got {other:?}"),
        }
    }

    #[test]
    fn trace_csv_has_header_and_one_row_per_iteration() {
        let skel = Skeleton::default();
        let trace = LossTrace {
            rows: vec![
                IterationLosses {
                    penetration: 0.125,
                    ground: 0.0,
                    gaze: 0.5,
                    pose: 1.0,
                    tilt: 0.0,
                    hand_match: 2.0,
                    total: 22.125,
                };
                3
            ],
            final_pose: BodyPose::rest(&skel),
        };
        let csv = trace.to_csv();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "iteration,penetration,ground,gaze,pose,tilt,hand_match,total");
        let fields: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(fields.len(), 8);
        assert_eq!(fields[0], "1");
        assert_eq!(fields[1].parse::<f64>().unwrap(), 0.125);
        assert_eq!(fields[7].parse::<f64>().unwrap(), 22.125);
    }

    #[test]
    fn total_gradient_matches_finite_differences_at_random_states() {
        use crate::autodiff::{check_gradient, ScalarFn};
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};

        let scene = sphere_on_table();
        let (hand, start, reference) =
            conditioned_setup(&scene, Vec3::new(0.85, -0.2, 0.5).normalized());
        let skel = Skeleton::default();
        let weights = LossWeights::default();
        let proximal: Vec<usize> = skel.surface.iter().map(|s| skel.parent[s.bone]).collect();
        let ref_fk = reference.fk(&skel);
        let feet = (ref_fk.joint_position[L_ANKLE].value()
            + ref_fk.joint_position[R_ANKLE].value())
            * 0.5;
        let ref_up = (ref_fk.joint_position[PELVIS].value() - feet).normalized();
        let objective = Objective {
            scene: &scene,
            skel: &skel,
            hand: &hand,
            weights: &weights,
            ref_rotations: &reference.joint_rotations,
            ref_up,
            proximal: &proximal,
        };

        struct TotalFn<'a> {
            objective: &'a Objective<'a>,
            ctx: &'a DetachedCtx,
            beta: f64,
        }
        impl ScalarFn for TotalFn<'_> {
            fn eval<R: Real>(&self, x: &[R]) -> R {
                let vars = PoseVars {
                    root_translation: V3::new(x[0], x[1], x[2]),
                    rotations: x[3..].chunks_exact(3).map(|c| V3::new(c[0], c[1], c[2])).collect(),
                    beta: R::lift(self.beta),
                };
                self.objective.eval_terms(&vars, self.ctx).weighted_total(self.objective.weights, true)
            }
        }

        let mut rng = StdRng::seed_from_u64(91);
        let base = start.to_vars();
        for trial in 0..12 {
            let mut vars = base.clone();
            vars.root_translation = vars.root_translation
                + V3::new(
                    rng.gen_range(-0.2..0.2),
                    rng.gen_range(-0.2..0.2),
                    rng.gen_range(-0.1..0.1),
                );
            for r in vars.rotations.iter_mut() {
                *r = *r
                    + V3::new(
                        rng.gen_range(-0.3..0.3),
                        rng.gen_range(-0.3..0.3),
                        rng.gen_range(-0.3..0.3),
                    );
            }
            let ctx = objective.build_ctx(&vars).unwrap();
            let mut x = vec![
                vars.root_translation.x,
                vars.root_translation.y,
                vars.root_translation.z,
            ];
            for r in &vars.rotations {
                x.extend_from_slice(&[r.x, r.y, r.z]);
            }
            let f = TotalFn { objective: &objective, ctx: &ctx, beta: vars.beta };
            let report = check_gradient(&f, &x, 1e-5);
            assert!(report.passes(1e-4, 1e-9), "trial {trial}: {report:?}");
        }
    }

    #[test]
    fn weights_and_config_validation_rejects_bad_values() {
        let mut w = LossWeights::default();
        w.penetration = -1.0;
        assert!(w.validate().is_err());
        let mut w = LossWeights::default();
        w.ground_beta2 = 0.0;
        assert!(w.validate().is_err());
        let mut c = OptimizerConfig::default();
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        let mut c = OptimizerConfig::default();
        c.adam_beta1 = 1.0;
        assert!(c.validate().is_err());
        assert!(LossWeights::default().validate().is_ok());
        assert!(OptimizerConfig::default().validate().is_ok());

        // Mismatched stature scales are refused.
        let scene = sphere_on_table();
        let (hand, start, reference) =
            conditioned_setup(&scene, Vec3::new(0.9, 0.1, 0.4).normalized());
        let skel = Skeleton::default();
        let mut tall = start.clone();
        tall.beta += 0.05;
        let err = optimize(
            &scene,
            &skel,
            &tall,
            &reference,
            &hand,
            &LossWeights::default(),
            &OptimizerConfig::default(),
        );
        assert!(err.is_err());
        let _ = TriMesh::default();
        let _ = Mat3::identity();
    }
}
