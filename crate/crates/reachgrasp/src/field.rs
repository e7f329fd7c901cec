//! Probabilistic field of feasible reaching directions around an object.
//!
//! Rays are cast from the object's centroid over a Fibonacci sphere lattice,
//! pruned by four feasibility filters (free arm line, body standing room at
//! torso height, ground clearance under the approach path, and a small yaw
//! sweep modeling the preferred approach side of the reaching hand), and the
//! survivors are weighted by how compatible their slope is with the object's
//! height above the ground.

use crate::error::{Error, Result};
use crate::geometry::ply::{heat_color, write_point_cloud_ply};
use crate::geometry::ray::Ray;
use crate::geometry::sphere::sphere_directions;
use crate::geometry::transform::Mat3;
use crate::geometry::vec3::Vec3;
use crate::par;
use crate::scene::{Handedness, Scene};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Default number of lattice directions.
pub const DEFAULT_RAY_COUNT: usize = 2562;
/// Default farthest arc position checked for standing room (meters).
pub const DEFAULT_REACH_LIMIT: f64 = 1.2;
/// Horizontal range of the body-orientation filter (meters).
pub const BODY_RANGE: f64 = 2.0;
/// Spacing of the standing-room probes along a ray (meters).
pub const STANDING_STEP: f64 = 0.3;
/// Yaw sweep extent and step of the approach-side filter (degrees).
pub const SWEEP_MAX_DEG: f64 = 30.0;
pub const SWEEP_STEP_DEG: f64 = 5.0;
/// Lower clamp on the angle to vertical; the weighting in
/// [`assign_probabilities`] is singular at zero.
pub const MIN_VERTICAL_ANGLE: f64 = 0.05;
/// Object heights at or above this count as "high" for the sign rule.
pub const HIGH_OBJECT_HEIGHT: f64 = 0.7;
/// Rays with a horizontal norm below this have no defined horizontal
/// projection and are exempt from the body-orientation filter.
pub const NEAR_VERTICAL_EPS: f64 = 1e-6;
/// Radius at which field points are placed in the PLY visualization.
const FIELD_PLY_RADIUS: f64 = 0.5;

/// Lifecycle of one candidate direction through the filter cascade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RayStatus {
    Alive,
    PrunedF1,
    PrunedF2,
    PrunedF3,
    PrunedF4,
}

/// One candidate reaching direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateRay {
    /// Unit direction from the object centroid.
    pub direction: Vec3,
    pub status: RayStatus,
    /// Smallest angle between the ray line and the vertical axis, radians in
    /// [0, π/2]. Stored raw after casting; clamped up to
    /// [`MIN_VERTICAL_ANGLE`] when probabilities are assigned.
    pub angle_to_vertical: f64,
    /// Slope-compatibility sign: −1 selects the favored class (weight grows
    /// as the ray approaches vertical), +1 the disfavored one.
    pub sign: i8,
    /// Normalized sampling probability; positive only for alive rays.
    pub probability: f64,
}

/// How many rays each filter pruned.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub pruned_f1: usize,
    pub pruned_f2: usize,
    pub pruned_f3: usize,
    pub pruned_f4: usize,
    pub alive: usize,
}

/// The completed field: every candidate with its status and probability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReachingField {
    pub rays: Vec<CandidateRay>,
    pub filter_report: FilterReport,
    /// True when the body-orientation filter would have pruned every ray and
    /// was therefore skipped.
    pub skip_f2: bool,
}

/// Tunable field construction parameters.
#[derive(Debug, Clone)]
pub struct FieldParams {
    pub ray_count: usize,
    pub reach_limit: f64,
}

impl Default for FieldParams {
    fn default() -> Self {
        FieldParams {
            ray_count: DEFAULT_RAY_COUNT,
            reach_limit: DEFAULT_REACH_LIMIT,
        }
    }
}

fn smallest_angle_to_vertical(direction: Vec3) -> f64 {
    direction.z.abs().clamp(0.0, 1.0).acos()
}

/// Casts the initial candidate set: lattice directions from the centroid,
/// all alive.
///
/// For left-hand scenes the lattice is reflected through the vertical plane
/// with normal x̂. The yaw-sweep filter is chiral, so a fixed lattice would
/// make left- and right-hand fields structurally different on mirrored
/// scenes; reflecting the lattice keeps the two builds in exact per-index
/// correspondence.
pub fn cast_candidates(scene: &Scene, n: usize) -> Result<Vec<CandidateRay>> {
    if n < 64 {
        return Err(Error::Config(format!(
            "field needs at least 64 candidate directions, got {n}"
        )));
    }
    let mut directions = sphere_directions(n);
    if scene.handedness == Handedness::Left {
        for d in &mut directions {
            d.x = -d.x;
        }
    }
    Ok(directions
        .into_iter()
        .map(|direction| CandidateRay {
            direction,
            status: RayStatus::Alive,
            angle_to_vertical: smallest_angle_to_vertical(direction),
            sign: 1,
            probability: 0.0,
        })
        .collect())
}

/// Applies `f` to every alive ray in parallel and marks those for which it
/// returns true with `pruned`.
fn prune_alive(
    rays: &mut [CandidateRay],
    pruned: RayStatus,
    f: impl Fn(&CandidateRay) -> bool + Sync + Send,
) -> usize {
    let verdicts = par::map_slice(rays, |ray| ray.status == RayStatus::Alive && f(ray));
    let mut count = 0;
    for (ray, prune) in rays.iter_mut().zip(verdicts) {
        if prune {
            ray.status = pruned;
            count += 1;
        }
    }
    count
}

/// Filter #1: the reaching arm needs a free straight line. Prunes rays whose
/// cast from the centroid hits the receptacle.
pub fn filter_arm_direction(rays: &mut [CandidateRay], scene: &Scene) -> usize {
    prune_alive(rays, RayStatus::PrunedF1, |ray| {
        let probe = Ray::new(scene.centroid, ray.direction, f64::INFINITY);
        scene.receptacle.ray_cast(&probe).is_some()
    })
}

/// Filter #2: the body stands behind the hand, roughly horizontal to the
/// object. Prunes rays whose horizontal projection hits the receptacle
/// within [`BODY_RANGE`]. Near-vertical rays have no defined projection and
/// are exempt. If every alive ray would be pruned the filter is skipped
/// entirely; returns the number pruned and whether the skip was taken.
pub fn filter_body_orientation(rays: &mut [CandidateRay], scene: &Scene) -> (usize, bool) {
    let verdicts = par::map_slice(rays, |ray| {
        if ray.status != RayStatus::Alive {
            return false;
        }
        let Some(horizontal) = ray.direction.horizontal().normalized_or(NEAR_VERTICAL_EPS) else {
            return false;
        };
        let probe = Ray::new(scene.centroid, horizontal, BODY_RANGE);
        scene.receptacle.ray_cast(&probe).is_some()
    });
    let alive = rays
        .iter()
        .filter(|r| r.status == RayStatus::Alive)
        .count();
    let would_prune = verdicts.iter().filter(|&&v| v).count();
    if alive > 0 && would_prune == alive {
        return (0, true);
    }
    let mut count = 0;
    for (ray, prune) in rays.iter_mut().zip(verdicts) {
        if prune {
            ray.status = RayStatus::PrunedF2;
            count += 1;
        }
    }
    (count, false)
}

/// Filter #3: the body must be able to stand under the approach path. At arc
/// positions `0.3, 0.6, …` up to `reach_limit` along each alive ray, a
/// vertical ray is dropped; if it hits the receptacle or any occluder before
/// reaching the ground plane, the parent ray is pruned. Probe points at or
/// below the ground never prune.
pub fn filter_standing(rays: &mut [CandidateRay], scene: &Scene, reach_limit: f64) -> usize {
    let steps = (reach_limit / STANDING_STEP + 1e-9).floor() as usize;
    prune_alive(rays, RayStatus::PrunedF3, |ray| {
        for k in 1..=steps {
            let p = scene.centroid + ray.direction * (STANDING_STEP * k as f64);
            if p.z <= 0.0 {
                continue;
            }
            let drop = Ray::new(p, -Vec3::Z, p.z - 1e-9);
            if scene.first_hit_excluding_object(&drop).is_some() {
                return true;
            }
        }
        false
    })
}

/// Filter #4 with an explicit sweep extent; see [`filter_wiggle`].
pub fn filter_wiggle_with(
    rays: &mut [CandidateRay],
    scene: &Scene,
    handedness: Handedness,
    max_deg: f64,
) -> usize {
    let steps = (max_deg / SWEEP_STEP_DEG + 1e-9).floor() as usize;
    // Clockwise viewed from +z is a negative yaw; the left hand sweeps the
    // opposite way.
    let chirality = match handedness {
        Handedness::Right => -1.0,
        Handedness::Left => 1.0,
    };
    prune_alive(rays, RayStatus::PrunedF4, |ray| {
        for k in 0..=steps {
            let angle = chirality * (SWEEP_STEP_DEG * k as f64).to_radians();
            let swept = Mat3::rotation_axis_angle(Vec3::Z, angle).mul_vec(ray.direction);
            let probe = Ray::new(scene.centroid, swept, f64::INFINITY);
            if scene.receptacle.ray_cast(&probe).is_some() {
                return true;
            }
        }
        false
    })
}

/// Filter #4: people approach objects from the side of the acting hand, so
/// each alive ray is swept about the vertical axis through the centroid over
/// [0°, 30°] in 5° steps — clockwise (viewed from above) for the right hand,
/// counterclockwise for the left — and pruned if any swept copy hits the
/// receptacle.
pub fn filter_wiggle(rays: &mut [CandidateRay], scene: &Scene, handedness: Handedness) -> usize {
    filter_wiggle_with(rays, scene, handedness, SWEEP_MAX_DEG)
}

/// Weights every alive ray by slope compatibility with the object height and
/// normalizes. High objects (≥ 0.7 m) favor descending rays, low objects
/// favor ascending ones: the favored sign class gets weight exp(+1/a) which
/// grows sharply as the ray approaches vertical, the other exp(−1/a).
/// Computed in log space so mixed sign classes cannot overflow.
pub fn assign_probabilities(rays: &mut [CandidateRay], object_height: f64) -> Result<()> {
    let high = object_height >= HIGH_OBJECT_HEIGHT;
    let mut log_weights = Vec::new();
    let mut alive_idx = Vec::new();
    for (i, ray) in rays.iter_mut().enumerate() {
        ray.probability = 0.0;
        if ray.status != RayStatus::Alive {
            continue;
        }
        let a = smallest_angle_to_vertical(ray.direction)
            .clamp(MIN_VERTICAL_ANGLE, std::f64::consts::FRAC_PI_2);
        ray.angle_to_vertical = a;
        let favored = (high && ray.direction.z < 0.0) || (!high && ray.direction.z > 0.0);
        ray.sign = if favored { -1 } else { 1 };
        log_weights.push(-1.0 / (f64::from(ray.sign) * a));
        alive_idx.push(i);
    }
    if alive_idx.is_empty() {
        return Err(Error::Infeasible(
            "every candidate reaching direction was pruned".into(),
        ));
    }
    let max_log = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|lw| (lw - max_log).exp()).collect();
    let total: f64 = weights.iter().sum();
    for (&i, w) in alive_idx.iter().zip(&weights) {
        rays[i].probability = w / total;
    }
    Ok(())
}

/// Runs the full cascade and probability assignment.
pub fn build_field(scene: &Scene, params: &FieldParams) -> Result<ReachingField> {
    let mut rays = cast_candidates(scene, params.ray_count)?;
    let pruned_f1 = filter_arm_direction(&mut rays, scene);
    let (pruned_f2, skip_f2) = filter_body_orientation(&mut rays, scene);
    let pruned_f3 = filter_standing(&mut rays, scene, params.reach_limit);
    let pruned_f4 = filter_wiggle(&mut rays, scene, scene.handedness);
    assign_probabilities(&mut rays, scene.object_height)?;
    let alive = rays
        .iter()
        .filter(|r| r.status == RayStatus::Alive)
        .count();
    Ok(ReachingField {
        rays,
        filter_report: FilterReport {
            pruned_f1,
            pruned_f2,
            pruned_f3,
            pruned_f4,
            alive,
        },
        skip_f2,
    })
}

impl ReachingField {
    pub fn alive_rays(&self) -> impl Iterator<Item = &CandidateRay> {
        self.rays.iter().filter(|r| r.status == RayStatus::Alive)
    }

    /// Draws one direction from the categorical distribution over alive rays.
    pub fn sample_direction(&self, rng: &mut impl Rng) -> Vec3 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = None;
        for ray in self.alive_rays() {
            acc += ray.probability;
            last = Some(ray.direction);
            if u < acc {
                return ray.direction;
            }
        }
        // Tiny normalization residue can leave u just past the accumulated
        // total; the draw then falls to the final alive ray.
        last.expect("field invariant: at least one alive ray")
    }

    /// Alive field points as a colored PLY point cloud: each survivor sits at
    /// a fixed radius from the centroid, colored blue (low probability) to
    /// red (high).
    pub fn to_ply(&self, centroid: Vec3) -> String {
        let p_max = self
            .alive_rays()
            .map(|r| r.probability)
            .fold(f64::MIN_POSITIVE, f64::max);
        let points: Vec<(Vec3, [u8; 3])> = self
            .alive_rays()
            .map(|r| {
                (
                    centroid + r.direction * FIELD_PLY_RADIUS,
                    heat_color(r.probability / p_max),
                )
            })
            .collect();
        write_point_cloud_ply(&points)
    }
}
