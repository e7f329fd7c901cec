//! End-to-end runs and their on-disk artifacts, shared by the CLI binary
//! and the integration tests.
//!
//! Every run follows the same discipline: the output directory is created,
//! a [`RunManifest`] identifying the inputs by content hash is written
//! *before any artifact*, the artifacts are produced, and the manifest is
//! rewritten with per-stage wall-clock timings. Apart from those timings
//! (and the manifest that carries them), every output byte is a pure
//! function of the `(scene, seed, config)` triple: all randomness flows
//! through one seeded generator per run and no stage reads the clock for
//! anything but the timing report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::body::fk::{body_palm_anchors, body_palm_patch, Fk};
use crate::body::pose::{arm_direction_fk, body_mesh, body_surface, mirror_pose, BodyPose};
use crate::body::reach::reach_solve;
use crate::body::skeleton::{Skeleton, PELVIS};
use crate::error::{Error, Result};
use crate::field::{
    build_field, cast_candidates, filter_arm_direction, filter_body_orientation, filter_standing,
    filter_wiggle, FieldParams, FilterReport, ReachingField,
};
use crate::geometry::{
    make_box_centered, make_icosphere, penetration_volume, save_obj, IndexedMesh, Mat3,
    PlaneReflection, RigidTransform, TriMesh, Vec3,
};
use crate::hand::{mirror_hand, synthesize_guiding_hand_with, GraspDirection, GuidingHand};
use crate::metrics::{
    condition_accuracy, contact_ratio, penetration_depth, penetration_percentage, pose_diversity,
    AlignedSample, ConditionPair, MetricsReport,
};
use crate::optim::{optimize, pre_translate, LossTrace, LossWeights, OptimizerConfig};
use crate::palm::{DEFAULT_CLEARANCE, PATCH_COLS, PATCH_ROWS, PATCH_SPACING};
use crate::scene::{
    drop_place, load_scene, load_scene_config, make_receptacle, BoxOpening, Handedness, Heading,
    PoseConfig, ReceptacleSpec, Scene, SceneConfig,
};

/// Manifest file name inside every run directory.
pub const MANIFEST_FILE: &str = "manifest.json";
/// Voxel edge used for the hand–object overlap volume (1 mm).
pub const VOLUME_VOXEL_EDGE: f64 = 1e-3;
/// Voxel budget for the overlap volume grid.
pub const VOLUME_VOXEL_CAP: usize = 20_000_000;
/// Extra skin around the palm patch when building its slab proxy (meters).
const SLAB_MARGIN: f64 = 0.002;
/// Radius of the procedurally generated object (meters).
pub const OBJECT_RADIUS: f64 = 0.04;

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

/// One hashed input file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputHash {
    pub path: String,
    /// Content-addressed hash: SHA-256 over `"blob {len}\0"` + file bytes.
    pub hash: String,
}

/// Wall-clock duration of one pipeline stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Provenance record for a run directory. Written with `stage_timings:
/// null` before any artifact so a crashed run still identifies its inputs;
/// rewritten with the real timings when the run completes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    pub seed: Option<u64>,
    pub input_hashes: Vec<InputHash>,
    pub output_directory: String,
    pub stage_timings: Option<Vec<StageTiming>>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config_path: &Path,
        seed: Option<u64>,
        inputs: &[PathBuf],
        out_dir: &Path,
    ) -> Result<RunManifest> {
        let mut input_hashes = Vec::with_capacity(inputs.len());
        for p in inputs {
            input_hashes.push(InputHash {
                path: p.display().to_string(),
                hash: content_hash(p)?,
            });
        }
        Ok(RunManifest {
            command: command.to_string(),
            config_path: config_path.display().to_string(),
            seed,
            input_hashes,
            output_directory: out_dir.display().to_string(),
            stage_timings: None,
        })
    }

    pub fn save(&self, out_dir: &Path) -> Result<()> {
        fs::write(
            out_dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(self)?,
        )?;
        Ok(())
    }

    pub fn load(out_dir: &Path) -> Result<RunManifest> {
        let text = fs::read_to_string(out_dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Content hash of a file: SHA-256 over a `"blob {len}\0"` header followed
/// by the raw bytes, hex-encoded. Identical content gives an identical
/// hash regardless of path or timestamps.
pub fn content_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let mut hasher = Sha256::new();
    hasher.update(format!("blob {}\0", bytes.len()).as_bytes());
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        write!(hex, "{b:02x}").unwrap();
    }
    Ok(hex)
}

/// Accumulates wall-clock time into named stages, preserving first-touch
/// order. Repeated laps on one stage (per-sample loops) add up.
struct Stopwatch {
    last: Instant,
    order: Vec<String>,
    acc: BTreeMap<String, f64>,
}

impl Stopwatch {
    fn new() -> Stopwatch {
        Stopwatch {
            last: Instant::now(),
            order: Vec::new(),
            acc: BTreeMap::new(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        let dt = now.duration_since(self.last).as_secs_f64();
        self.last = now;
        if !self.acc.contains_key(stage) {
            self.order.push(stage.to_string());
        }
        *self.acc.entry(stage.to_string()).or_insert(0.0) += dt;
    }

    fn timings(&self) -> Vec<StageTiming> {
        self.order
            .iter()
            .map(|s| StageTiming {
                stage: s.clone(),
                seconds: self.acc[s],
            })
            .collect()
    }
}

/// Failure summary written to `report.json` when a synthesis run cannot
/// complete; partial artifacts produced before the failure stay in place.
#[derive(Debug, Serialize, Deserialize)]
pub struct FailureReport {
    pub command: String,
    pub error: String,
    pub exit_code: i32,
}

fn write_failure_report(out_dir: &Path, command: &str, e: &Error) {
    let report = FailureReport {
        command: command.to_string(),
        error: e.to_string(),
        exit_code: e.exit_code(),
    };
    if let Ok(json) = serde_json::to_string_pretty(&report) {
        let _ = fs::write(out_dir.join("report.json"), json);
    }
}

// ---------------------------------------------------------------------------
// field
// ---------------------------------------------------------------------------

/// Filter-cascade dump written when every candidate direction is pruned.
#[derive(Debug, Serialize, Deserialize)]
pub struct FilterDump {
    #[serde(flatten)]
    pub report: FilterReport,
    pub skip_f2: bool,
}

/// Builds the reaching field for a scene and exports `field.json` plus a
/// `field.ply` heatmap (red = high probability, blue = low). When the
/// cascade prunes every ray the filter counts are dumped to
/// `filter_report.json` and the infeasibility is returned as an error.
pub fn run_field(
    scene_path: &Path,
    rays: usize,
    seed: Option<u64>,
    out_dir: &Path,
) -> Result<ReachingField> {
    fs::create_dir_all(out_dir)?;
    let config = load_scene_config(scene_path)?;
    let seed = seed.unwrap_or(config.seed);
    let inputs = scene_inputs(scene_path, &config, None);
    let mut manifest = RunManifest::new("field", scene_path, Some(seed), &inputs, out_dir)?;
    manifest.save(out_dir)?;

    let mut clock = Stopwatch::new();
    let scene = load_scene(&config)?;
    clock.lap("load_scene");

    let params = FieldParams {
        ray_count: rays,
        ..FieldParams::default()
    };
    let field = match build_field(&scene, &params) {
        Ok(field) => field,
        Err(e) => {
            if matches!(e, Error::Infeasible(_)) {
                dump_filter_report(&scene, &params, out_dir)?;
            }
            return Err(e);
        }
    };
    clock.lap("build_field");

    fs::write(
        out_dir.join("field.json"),
        serde_json::to_string_pretty(&field)?,
    )?;
    fs::write(out_dir.join("field.ply"), field.to_ply(scene.centroid))?;
    clock.lap("export");

    manifest.stage_timings = Some(clock.timings());
    manifest.save(out_dir)?;
    Ok(field)
}

/// Re-runs the cascade (same order as `build_field`) to recover the filter
/// counts after an all-pruned failure, and writes them to
/// `filter_report.json`.
fn dump_filter_report(scene: &Scene, params: &FieldParams, out_dir: &Path) -> Result<()> {
    let mut rays = cast_candidates(scene, params.ray_count)?;
    let pruned_f1 = filter_arm_direction(&mut rays, scene);
    let (pruned_f2, skip_f2) = filter_body_orientation(&mut rays, scene);
    let pruned_f3 = filter_standing(&mut rays, scene, params.reach_limit);
    let pruned_f4 = filter_wiggle(&mut rays, scene, scene.handedness);
    let alive = rays
        .iter()
        .filter(|r| r.status == crate::field::RayStatus::Alive)
        .count();
    let dump = FilterDump {
        report: FilterReport {
            pruned_f1,
            pruned_f2,
            pruned_f3,
            pruned_f4,
            alive,
        },
        skip_f2,
    };
    fs::write(
        out_dir.join("filter_report.json"),
        serde_json::to_string_pretty(&dump)?,
    )?;
    Ok(())
}

fn scene_inputs(
    scene_path: &Path,
    config: &SceneConfig,
    extra: Option<&Path>,
) -> Vec<PathBuf> {
    let mut inputs = vec![
        scene_path.to_path_buf(),
        config.object_mesh.clone(),
        config.receptacle_mesh.clone(),
    ];
    inputs.extend(config.occluders.iter().cloned());
    if let Some(p) = extra {
        inputs.push(p.to_path_buf());
    }
    inputs
}

// ---------------------------------------------------------------------------
// synthesize
// ---------------------------------------------------------------------------

/// Tunables of a synthesis run, loadable from JSON; every field has a
/// default, and command-line flags override the loaded values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    /// Candidate directions in the reaching field.
    pub ray_count: usize,
    /// Standing-reach radius used by the field's distance filter (meters).
    pub reach_limit: f64,
    /// Palm clearance off the object surface (meters).
    pub clearance: f64,
    /// Bodies to synthesize; 2 or more enables the pose-diversity metric.
    pub samples: usize,
    pub weights: LossWeights,
    pub optimizer: OptimizerConfig,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        let field = FieldParams::default();
        SynthesisConfig {
            ray_count: field.ray_count,
            reach_limit: field.reach_limit,
            clearance: DEFAULT_CLEARANCE,
            samples: 1,
            weights: LossWeights::default(),
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        if !(self.clearance.is_finite() && self.clearance >= 0.0) {
            return Err(Error::Config(format!(
                "clearance must be finite and non-negative, got {}",
                self.clearance
            )));
        }
        if !(self.reach_limit.is_finite() && self.reach_limit > 0.0) {
            return Err(Error::Config(format!(
                "reach_limit must be positive, got {}",
                self.reach_limit
            )));
        }
        self.weights.validate()?;
        self.optimizer.validate()
    }
}

/// Loads a [`SynthesisConfig`] from a JSON file.
pub fn load_synthesis_config(path: &Path) -> Result<SynthesisConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let config: SynthesisConfig =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

/// One synthesized sample in the frame the optimizer ran in.
struct SampleRun {
    direction: Vec3,
    hand: GuidingHand,
    final_pose: BodyPose,
    trace: LossTrace,
}

/// The completed synthesis, already mapped back to the requested scene
/// frame (left-hand runs are mirrored back before export).
pub struct SynthesisRun {
    /// The sampled approach direction that conditioned both the guiding
    /// hand and the reaching pose.
    pub direction: Vec3,
    pub hand: GuidingHand,
    pub final_pose: BodyPose,
    pub trace: LossTrace,
    pub metrics: MetricsReport,
}

/// Canonical mirror plane of a scene: the vertical plane through the
/// object centroid with normal x̂ — the same reflection the direction
/// lattice uses for left-hand field builds, so a mirrored-scene run stays
/// in exact per-index correspondence with the original.
pub fn mirror_plane(scene: &Scene) -> PlaneReflection {
    PlaneReflection::vertical(scene.centroid, Vec3::X)
}

/// Samples one reaching direction, conditions the guiding hand and the
/// reach solver on it, pre-translates, refines with the two-stage
/// optimizer, measures, and exports `body.obj`, `hand.json`, `trace.csv`,
/// and `metrics.json`.
///
/// Left-hand runs execute the right-hand pipeline on the scene reflected
/// through [`mirror_plane`] and mirror the pose and hand back; the metric
/// values are reflection-invariant and carry over verbatim. On failure a
/// `report.json` with the error joins whatever artifacts were already
/// produced.
pub fn run_synthesize(
    scene_path: &Path,
    config: &SynthesisConfig,
    config_path: Option<&Path>,
    seed: Option<u64>,
    hand: Option<Handedness>,
    out_dir: &Path,
) -> Result<SynthesisRun> {
    fs::create_dir_all(out_dir)?;
    config.validate()?;
    let scene_config = load_scene_config(scene_path)?;
    let seed = seed.unwrap_or(scene_config.seed);
    let handedness = hand.unwrap_or(scene_config.handedness);
    let inputs = scene_inputs(scene_path, &scene_config, config_path);
    let mut manifest = RunManifest::new("synthesize", scene_path, Some(seed), &inputs, out_dir)?;
    manifest.save(out_dir)?;

    let mut clock = Stopwatch::new();
    let mut scene = load_scene(&scene_config)?;
    scene.seed = seed;
    scene.handedness = handedness;
    let plane = mirror_plane(&scene);
    // The optimizer pipeline always runs right-handed; left requests run it
    // in the mirrored scene and reflect the results back.
    let core_scene = match handedness {
        Handedness::Right => scene,
        Handedness::Left => scene.mirrored(&plane)?,
    };
    let mirrored = handedness == Handedness::Left;
    clock.lap("load_scene");

    let skel = Skeleton::default();
    let mut partial_hand: Option<GuidingHand> = None;
    let outcome = (|| -> Result<(Vec<SampleRun>, MetricsReport)> {
        let runs = synthesize_core(&core_scene, &skel, config, seed, &mut clock, &mut partial_hand)?;
        let metrics = compute_metrics(&core_scene, &skel, &runs)?;
        Ok((runs, metrics))
    })();
    let (runs, metrics) = match outcome {
        Ok(v) => v,
        Err(e) => {
            if let Some(h) = partial_hand {
                let h = if mirrored { mirror_hand(&h, &plane) } else { h };
                if let Ok(json) = h.to_json() {
                    let _ = fs::write(out_dir.join("hand.json"), json);
                }
            }
            write_failure_report(out_dir, "synthesize", &e);
            return Err(e);
        }
    };
    clock.lap("metrics");

    let primary = runs.into_iter().next().expect("samples >= 1 was validated");
    let (direction, hand_out, mut final_pose) = if mirrored {
        (
            plane.reflect_vector(primary.direction),
            mirror_hand(&primary.hand, &plane),
            mirror_pose(&skel, &primary.final_pose, &plane),
        )
    } else {
        (primary.direction, primary.hand, primary.final_pose)
    };
    final_pose.wrap_angles();

    save_obj(&body_mesh(&skel, &final_pose), &out_dir.join("body.obj"))?;
    fs::write(out_dir.join("hand.json"), hand_out.to_json()?)?;
    fs::write(out_dir.join("trace.csv"), primary.trace.to_csv())?;
    fs::write(out_dir.join("metrics.json"), metrics.to_json()?)?;
    clock.lap("export");

    manifest.stage_timings = Some(clock.timings());
    manifest.save(out_dir)?;
    Ok(SynthesisRun {
        direction,
        hand: hand_out,
        final_pose,
        trace: primary.trace,
        metrics,
    })
}

/// The right-handed synthesis loop: one field build, then `samples` draws
/// from one seeded generator, each conditioning a guiding hand and a reach
/// pose that the optimizer refines.
fn synthesize_core(
    scene: &Scene,
    skel: &Skeleton,
    config: &SynthesisConfig,
    seed: u64,
    clock: &mut Stopwatch,
    partial_hand: &mut Option<GuidingHand>,
) -> Result<Vec<SampleRun>> {
    debug_assert_eq!(scene.handedness, Handedness::Right);
    let params = FieldParams {
        ray_count: config.ray_count,
        reach_limit: config.reach_limit,
    };
    let field = build_field(scene, &params)?;
    clock.lap("build_field");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut runs = Vec::with_capacity(config.samples);
    for _ in 0..config.samples {
        let direction = field.sample_direction(&mut rng);
        let hand = synthesize_guiding_hand_with(
            scene,
            &GraspDirection {
                d_grasp: direction,
                handedness: Handedness::Right,
            },
            config.clearance,
        )?;
        if partial_hand.is_none() {
            *partial_hand = Some(hand.clone());
        }
        clock.lap("guiding_hand");
        let reference = reach_solve(skel, hand.wrist_position, -direction, Handedness::Right)?;
        clock.lap("reach_solve");
        let (start, _) = pre_translate(&reference, -direction, config.optimizer.pre_translation);
        let (final_pose, trace) = optimize(
            scene,
            skel,
            &start,
            &reference,
            &hand,
            &config.weights,
            &config.optimizer,
        )?;
        clock.lap("optimize");
        runs.push(SampleRun {
            direction,
            hand,
            final_pose,
            trace,
        });
    }
    Ok(runs)
}

/// A thin watertight box around the palm patch (patch extents plus a 2 mm
/// skin), used as the hand volume proxy for the overlap-volume metric.
fn palm_slab(fk: &Fk<f64>, hand: Handedness) -> TriMesh {
    let (_, _, _, wrist) = Skeleton::side_joints(hand);
    let w = fk.joint_position[wrist].value();
    let rot = fk.joint_rotation[wrist].value();
    let t = rot.mul_vec(Skeleton::wrist_thumb_axis(hand));
    let f = rot.mul_vec(Skeleton::wrist_finger_axis(hand));
    let n = rot.mul_vec(Skeleton::wrist_palm_normal(hand));
    let half_thumb = (PATCH_ROWS - 1) as f64 / 2.0 * PATCH_SPACING + SLAB_MARGIN;
    let half_finger = (PATCH_COLS - 1) as f64 / 2.0 * PATCH_SPACING + SLAB_MARGIN;
    let mut slab = make_box_centered(
        Vec3::ZERO,
        Vec3::new(2.0 * half_thumb, 2.0 * half_finger, 2.0 * SLAB_MARGIN),
    );
    slab.apply_transform(&RigidTransform {
        rotation: Mat3::from_columns(t, f, n),
        translation: w,
    });
    slab
}

/// Joint positions aligned by pelvis placement and horizontal heading, the
/// sample format the diversity metric compares.
fn aligned_body_sample(skel: &Skeleton, pose: &BodyPose) -> AlignedSample {
    let fk = pose.fk(skel);
    let points: Vec<Vec3> = fk.joint_position.iter().map(|p| p.value()).collect();
    let origin = fk.joint_position[PELVIS].value();
    let frame = heading_frame(&fk.joint_rotation[PELVIS].value());
    AlignedSample {
        points,
        origin,
        frame,
    }
}

/// Upright frame whose x axis is the horizontal projection of the pelvis
/// x axis; identity when the pelvis x axis is vertical.
fn heading_frame(rot: &Mat3) -> Mat3 {
    match rot.col(0).horizontal().normalized_or(1e-9) {
        Some(h) => Mat3::from_columns(h, Vec3::Z.cross(h), Vec3::Z),
        None => Mat3::identity(),
    }
}

/// Full metric set over the synthesized samples; the first sample is the
/// primary one all single-body metrics are computed on.
fn compute_metrics(scene: &Scene, skel: &Skeleton, runs: &[SampleRun]) -> Result<MetricsReport> {
    let hand_side = scene.handedness;
    let primary = &runs[0];
    let fk = primary.final_pose.fk(skel);
    let patch: Vec<Vec3> = body_palm_patch(&fk, hand_side)
        .into_iter()
        .map(|p| p.value())
        .collect();
    let surface = body_surface(skel, &primary.final_pose).points;

    let contact = contact_ratio(&patch, &scene.object)?;
    let pen_body = penetration_percentage(&surface, &scene.receptacle)?;
    let pen_hand = penetration_percentage(&patch, &scene.object)?;
    let slab = IndexedMesh::new(palm_slab(&fk, hand_side));
    let volume = penetration_volume(&slab, &scene.object, VOLUME_VOXEL_EDGE, VOLUME_VOXEL_CAP)?;
    // Retreat opposite the palmar (object-facing) direction, i.e. along the
    // approach direction itself.
    let (depth, saturated) = penetration_depth(&patch, &scene.object, primary.direction)?;

    let diversity = if runs.len() >= 2 {
        let samples: Vec<AlignedSample> = runs
            .iter()
            .map(|r| aligned_body_sample(skel, &r.final_pose))
            .collect();
        Some(pose_diversity(&samples)?)
    } else {
        None
    };

    let (_, _, _, wrist) = Skeleton::side_joints(hand_side);
    let (a0, a1) = body_palm_anchors(&fk, hand_side);
    let pair = ConditionPair {
        arm_target: -primary.direction,
        arm_realized: arm_direction_fk(&fk, hand_side),
        palm_target: primary.direction,
        palm_realized: (a1.value() - a0.value()).normalized(),
        wrist_target: primary.hand.wrist_position,
        wrist_realized: fk.joint_position[wrist].value(),
    };
    let condition_errors = condition_accuracy(&[pair])?;

    Ok(MetricsReport {
        contact_ratio: contact,
        penetration_percentage_body_receptacle: pen_body,
        penetration_percentage_hand_object: pen_hand,
        penetration_volume_mm3: volume,
        penetration_depth_mm: depth,
        penetration_depth_saturated: saturated,
        pose_diversity_cm: diversity,
        // Deliberately absent: metric files must be byte-reproducible from
        // (scene, seed, config); wall-clock times live in the manifest.
        runtime_seconds: None,
        condition_errors,
    })
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

/// Result of aggregating run directories.
#[derive(Debug)]
pub struct EvalOutcome {
    /// Runs that contributed a row.
    pub rows: usize,
    /// Directories skipped with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

const AGGREGATE_COLUMNS: [&str; 12] = [
    "run",
    "contact_ratio",
    "penetration_percentage_body_receptacle",
    "penetration_percentage_hand_object",
    "penetration_volume_mm3",
    "penetration_depth_mm",
    "penetration_depth_saturated",
    "pose_diversity_cm",
    "runtime_seconds",
    "arm_angle_deg",
    "palm_angle_deg",
    "wrist_mse_cm",
];

fn metric_columns(m: &MetricsReport) -> [Option<f64>; 11] {
    [
        Some(m.contact_ratio),
        Some(m.penetration_percentage_body_receptacle),
        Some(m.penetration_percentage_hand_object),
        Some(m.penetration_volume_mm3),
        Some(m.penetration_depth_mm),
        Some(if m.penetration_depth_saturated { 1.0 } else { 0.0 }),
        m.pose_diversity_cm,
        m.runtime_seconds,
        Some(m.condition_errors.arm_angle_deg),
        Some(m.condition_errors.palm_angle_deg),
        Some(m.condition_errors.wrist_mse_cm),
    ]
}

fn csv_cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

/// Builds `aggregate.csv`: one row per run plus a final `mean` row. The
/// saturation flag is encoded 0/1 so its mean is the saturated fraction;
/// absent optional metrics leave empty cells and drop out of the means.
fn aggregate_csv(rows: &[(String, MetricsReport)]) -> String {
    let mut out = String::new();
    out.push_str(&AGGREGATE_COLUMNS.join(","));
    out.push('\n');
    let mut sums = [0.0f64; 11];
    let mut counts = [0usize; 11];
    for (run, report) in rows {
        let cols = metric_columns(report);
        let cells: Vec<String> = cols.iter().map(|&v| csv_cell(v)).collect();
        writeln!(out, "\"{}\",{}", run.replace('"', "\"\""), cells.join(",")).unwrap();
        for (i, v) in cols.iter().enumerate() {
            if let Some(x) = v {
                sums[i] += x;
                counts[i] += 1;
            }
        }
    }
    let means: Vec<String> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| {
            if c == 0 {
                String::new()
            } else {
                format!("{}", s / c as f64)
            }
        })
        .collect();
    writeln!(out, "\"mean\",{}", means.join(",")).unwrap();
    out
}

fn read_metrics(path: &Path) -> Result<MetricsReport> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Aggregates the `metrics.json` of each run directory into
/// `aggregate.csv` (per-run rows plus a mean row). Unreadable or malformed
/// metric files are skipped with a warning on stderr; if every directory
/// is skipped the aggregation fails.
pub fn run_eval(run_dirs: &[PathBuf], out_dir: &Path) -> Result<EvalOutcome> {
    if run_dirs.is_empty() {
        return Err(Error::Config(
            "eval needs at least one run directory".into(),
        ));
    }
    fs::create_dir_all(out_dir)?;
    let metric_paths: Vec<PathBuf> = run_dirs.iter().map(|d| d.join("metrics.json")).collect();
    let inputs: Vec<PathBuf> = metric_paths.iter().filter(|p| p.is_file()).cloned().collect();
    let mut manifest = RunManifest::new("eval", Path::new(""), None, &inputs, out_dir)?;
    manifest.save(out_dir)?;

    let mut clock = Stopwatch::new();
    let mut rows: Vec<(String, MetricsReport)> = Vec::new();
    let mut skipped: Vec<(PathBuf, String)> = Vec::new();
    for (dir, path) in run_dirs.iter().zip(&metric_paths) {
        match read_metrics(path) {
            Ok(report) => rows.push((dir.display().to_string(), report)),
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", dir.display());
                skipped.push((dir.clone(), e.to_string()));
            }
        }
    }
    clock.lap("read");
    if rows.is_empty() {
        return Err(Error::Parse(
            "every run directory was skipped; no usable metrics.json".into(),
        ));
    }
    fs::write(out_dir.join("aggregate.csv"), aggregate_csv(&rows))?;
    clock.lap("export");

    manifest.stage_timings = Some(clock.timings());
    manifest.save(out_dir)?;
    Ok(EvalOutcome {
        rows: rows.len(),
        skipped,
    })
}

// ---------------------------------------------------------------------------
// scene-gen
// ---------------------------------------------------------------------------

/// The four procedural receptacle families the generator offers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    Table,
    Shelf,
    OpenBox,
    WallCabinet,
}

/// Every generator family, in a fixed order batteries can iterate.
pub const ALL_SCENE_KINDS: [SceneKind; 4] = [
    SceneKind::Table,
    SceneKind::Shelf,
    SceneKind::OpenBox,
    SceneKind::WallCabinet,
];

impl SceneKind {
    pub fn name(self) -> &'static str {
        match self {
            SceneKind::Table => "table",
            SceneKind::Shelf => "shelf",
            SceneKind::OpenBox => "open-box",
            SceneKind::WallCabinet => "wall-cabinet",
        }
    }

    pub fn parse(s: &str) -> Result<SceneKind> {
        match s {
            "table" => Ok(SceneKind::Table),
            "shelf" => Ok(SceneKind::Shelf),
            "open-box" | "open_box" => Ok(SceneKind::OpenBox),
            "wall-cabinet" | "wall_cabinet" => Ok(SceneKind::WallCabinet),
            other => Err(Error::Config(format!(
                "unknown scene kind `{other}` (expected table, shelf, open-box, or wall-cabinet)"
            ))),
        }
    }
}

/// Measures where an object dropped at `probe` comes to rest (the height
/// of its lowest vertex), used to calibrate families whose support height
/// is not an explicit parameter.
fn resting_bottom(object: &TriMesh, receptacle: &TriMesh, probe: Vec3) -> Result<f64> {
    let t = drop_place(object, receptacle, probe)?;
    let bottom = object
        .vertices
        .iter()
        .map(|v| v.z)
        .fold(f64::INFINITY, f64::min);
    Ok(bottom + t.translation.z)
}

/// Builds the receptacle mesh for a family so that an object dropped at
/// the returned probe point rests with its centroid near `support_z` +
/// (centroid − lowest vertex).
fn build_family(kind: SceneKind, support_z: f64, object: &TriMesh) -> Result<(TriMesh, Vec3)> {
    match kind {
        SceneKind::Table => {
            let mesh = make_receptacle(&ReceptacleSpec::Table {
                width: 1.0,
                depth: 1.0,
                height: support_z,
            })?;
            // Near the +x edge: standing room for the body next to the top.
            Ok((mesh, Vec3::new(0.35, 0.0, support_z + 1.0)))
        }
        SceneKind::Shelf => {
            let mesh = make_receptacle(&ReceptacleSpec::Shelf {
                width: 0.5,
                depth: 0.9,
                height: support_z + 0.4,
                opening: Heading::PlusX,
                shelf_heights: vec![support_z],
            })?;
            // On the board, toward the open +x face.
            Ok((mesh, Vec3::new(0.17, 0.0, support_z + 0.15)))
        }
        SceneKind::OpenBox => {
            // The native box stands on the ground; raise it on a plinth so
            // its interior floor carries the object at support_z. The box
            // is wide and shallow and the object sits near the +x wall:
            // a band of directions can then exit over the rim while their
            // standing probes land beyond the footprint.
            let native = make_receptacle(&ReceptacleSpec::OpenBox {
                width: 0.9,
                depth: 0.9,
                height: 0.22,
                opening: BoxOpening::Up,
            })?;
            let floor_top = resting_bottom(object, &native, Vec3::new(0.30, 0.0, 0.1))?;
            let lift = support_z - floor_top;
            if lift <= 1e-3 {
                return Err(Error::Config(format!(
                    "open-box scene needs an object height above {floor_top:.3} m"
                )));
            }
            let mut mesh = native;
            mesh.translate(Vec3::new(0.0, 0.0, lift));
            mesh.merge(&crate::geometry::make_box(
                Vec3::new(-0.20, -0.20, 0.0),
                Vec3::new(0.20, 0.20, lift - 2e-4),
            ));
            Ok((mesh, Vec3::new(0.30, 0.0, support_z + 0.15)))
        }
        SceneKind::WallCabinet => {
            // Calibrate the gap between the mount height and the cavity
            // floor once, then mount so the floor sits at support_z.
            let reference_mount = 0.5;
            let spec = |mount| ReceptacleSpec::WallCabinet {
                width: 0.8,
                depth: 0.45,
                height: 0.5,
                mount_height: mount,
            };
            let reference = make_receptacle(&spec(reference_mount))?;
            let floor_top = resting_bottom(
                object,
                &reference,
                Vec3::new(0.30, 0.0, reference_mount + 0.2),
            )?;
            let mount = support_z - (floor_top - reference_mount);
            if mount <= 1e-3 {
                return Err(Error::Config(format!(
                    "wall-cabinet scene needs an object height above {:.3} m",
                    floor_top - reference_mount
                )));
            }
            let mesh = make_receptacle(&spec(mount))?;
            Ok((mesh, Vec3::new(0.30, 0.0, support_z + 0.2)))
        }
    }
}

/// Generates a scene of the given family with the object centroid at
/// `object_height` (within the placement gap), writing `object.obj`,
/// `receptacle.obj`, and `scene.json` into `out_dir`. Returns the path of
/// the scene config.
pub fn run_scene_gen(
    kind: SceneKind,
    object_height: f64,
    seed: u64,
    out_dir: &Path,
) -> Result<PathBuf> {
    if !(object_height.is_finite() && (0.25..=1.8).contains(&object_height)) {
        return Err(Error::Config(format!(
            "object height must lie in [0.25, 1.8] m, got {object_height}"
        )));
    }
    fs::create_dir_all(out_dir)?;
    let mut manifest = RunManifest::new("scene-gen", Path::new(""), Some(seed), &[], out_dir)?;
    manifest.save(out_dir)?;

    let mut clock = Stopwatch::new();
    let object = make_icosphere(Vec3::ZERO, OBJECT_RADIUS, 2);
    let depth_below = -object
        .vertices
        .iter()
        .map(|v| v.z)
        .fold(f64::INFINITY, f64::min);
    let support_z = object_height - depth_below;
    let (receptacle, probe) = build_family(kind, support_z, &object)?;
    let pose = drop_place(&object, &receptacle, probe)?;
    clock.lap("generate");

    save_obj(&object, &out_dir.join("object.obj"))?;
    save_obj(&receptacle, &out_dir.join("receptacle.obj"))?;
    let config = SceneConfig {
        object_mesh: "object.obj".into(),
        receptacle_mesh: "receptacle.obj".into(),
        object_pose: PoseConfig {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [pose.translation.x, pose.translation.y, pose.translation.z],
        },
        seed,
        handedness: Handedness::Right,
        occluders: vec![],
    };
    let scene_path = out_dir.join("scene.json");
    fs::write(&scene_path, serde_json::to_string_pretty(&config)?)?;
    clock.lap("export");

    manifest.stage_timings = Some(clock.timings());
    manifest.save(out_dir)?;
    Ok(scene_path)
}
