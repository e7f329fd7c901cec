//! Skeleton definition: joint hierarchy, rest offsets, capsule radii, cone
//! limits, landmarks, and a deterministic capsule surface sampling.
//!
//! Conventions: the rest pose faces +x with +z up; the right side of the
//! body lies at negative y. A "bone" is the capsule from a joint's parent to
//! that joint, named by the child joint; its surface samples are expressed
//! in the *parent* joint's frame so they move rigidly with it.

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scene::Handedness;
use serde::{Deserialize, Serialize};

pub const JOINT_COUNT: usize = 22;

pub const PELVIS: usize = 0;
pub const SPINE1: usize = 1;
pub const SPINE2: usize = 2;
pub const SPINE3: usize = 3;
pub const NECK: usize = 4;
pub const HEAD: usize = 5;
pub const L_COLLAR: usize = 6;
pub const L_SHOULDER: usize = 7;
pub const L_ELBOW: usize = 8;
pub const L_WRIST: usize = 9;
pub const R_COLLAR: usize = 10;
pub const R_SHOULDER: usize = 11;
pub const R_ELBOW: usize = 12;
pub const R_WRIST: usize = 13;
pub const L_HIP: usize = 14;
pub const L_KNEE: usize = 15;
pub const L_ANKLE: usize = 16;
pub const L_FOOT: usize = 17;
pub const R_HIP: usize = 18;
pub const R_KNEE: usize = 19;
pub const R_ANKLE: usize = 20;
pub const R_FOOT: usize = 21;

pub const JOINT_NAMES: [&str; JOINT_COUNT] = [
    "pelvis", "spine1", "spine2", "spine3", "neck", "head", "l_collar", "l_shoulder", "l_elbow",
    "l_wrist", "r_collar", "r_shoulder", "r_elbow", "r_wrist", "l_hip", "l_knee", "l_ankle",
    "l_foot", "r_hip", "r_knee", "r_ankle", "r_foot",
];

/// Left/right channel exchange; midline joints map to themselves.
pub fn mirror_joint(j: usize) -> usize {
    match j {
        L_COLLAR => R_COLLAR,
        L_SHOULDER => R_SHOULDER,
        L_ELBOW => R_ELBOW,
        L_WRIST => R_WRIST,
        R_COLLAR => L_COLLAR,
        R_SHOULDER => L_SHOULDER,
        R_ELBOW => L_ELBOW,
        R_WRIST => L_WRIST,
        L_HIP => R_HIP,
        L_KNEE => R_KNEE,
        L_ANKLE => R_ANKLE,
        L_FOOT => R_FOOT,
        R_HIP => L_HIP,
        R_KNEE => L_KNEE,
        R_ANKLE => L_ANKLE,
        R_FOOT => L_FOOT,
        other => other,
    }
}

/// Raw (pre-normalization) joint table: (name, parent, rest offset from the
/// parent joint, capsule radius of the bone ending at this joint, rotation
/// cone limit in radians). The whole table is uniformly rescaled at
/// construction so the rest-pose surface height is exactly 1.70 m.
const RAW_JOINTS: [(&str, Option<&str>, [f64; 3], f64, f64); JOINT_COUNT] = [
    ("pelvis", None, [0.0, 0.0, 0.0], 0.10, std::f64::consts::PI),
    ("spine1", Some("pelvis"), [0.0, 0.0, 0.11], 0.105, 0.5),
    ("spine2", Some("spine1"), [0.0, 0.0, 0.12], 0.11, 0.5),
    ("spine3", Some("spine2"), [0.0, 0.0, 0.13], 0.115, 0.5),
    ("neck", Some("spine3"), [0.0, 0.0, 0.11], 0.05, 0.9),
    ("head", Some("neck"), [0.0, 0.0, 0.10], 0.10, 0.9),
    ("l_collar", Some("spine3"), [0.0, 0.05, 0.06], 0.04, 0.35),
    ("l_shoulder", Some("l_collar"), [0.0, 0.13, 0.02], 0.05, 2.8),
    ("l_elbow", Some("l_shoulder"), [0.0, 0.28, 0.0], 0.045, 2.6),
    ("l_wrist", Some("l_elbow"), [0.0, 0.26, 0.0], 0.035, 1.6),
    ("r_collar", Some("spine3"), [0.0, -0.05, 0.06], 0.04, 0.35),
    ("r_shoulder", Some("r_collar"), [0.0, -0.13, 0.02], 0.05, 2.8),
    ("r_elbow", Some("r_shoulder"), [0.0, -0.28, 0.0], 0.045, 2.6),
    ("r_wrist", Some("r_elbow"), [0.0, -0.26, 0.0], 0.035, 1.6),
    ("l_hip", Some("pelvis"), [0.0, 0.09, -0.07], 0.08, 2.0),
    ("l_knee", Some("l_hip"), [0.0, 0.0, -0.45], 0.07, 2.4),
    ("l_ankle", Some("l_knee"), [0.0, 0.0, -0.43], 0.05, 0.9),
    ("l_foot", Some("l_ankle"), [0.135, 0.0, -0.06], 0.035, 0.6),
    ("r_hip", Some("pelvis"), [0.0, -0.09, -0.07], 0.08, 2.0),
    ("r_knee", Some("r_hip"), [0.0, 0.0, -0.45], 0.07, 2.4),
    ("r_ankle", Some("r_knee"), [0.0, 0.0, -0.43], 0.05, 0.9),
    ("r_foot", Some("r_ankle"), [0.135, 0.0, -0.06], 0.035, 0.6),
];

/// Head-local landmark offsets before height normalization.
const RAW_NOSE_TIP: [f64; 3] = [0.10, 0.0, 0.015];
const RAW_HEAD_BACK: [f64; 3] = [-0.095, 0.0, 0.02];
const RAW_GLABELLA: [f64; 3] = [0.095, 0.0, 0.05];

/// Target rest-pose surface height after normalization.
const DEFAULT_HEIGHT: f64 = 1.70;
/// Azimuthal samples per capsule ring.
const RING_SAMPLES: usize = 8;
/// Maximum axial spacing between cylinder rings (meters).
const RING_SPACING: f64 = 0.035;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointConfig {
    pub name: String,
    pub parent: Option<String>,
    pub offset: [f64; 3],
    pub bone_radius: f64,
    pub limit_deg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LandmarkConfig {
    pub joint: String,
    pub local: [f64; 3],
}

/// JSON-facing skeleton definition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkeletonConfig {
    pub joints: Vec<JointConfig>,
    pub nose_tip: LandmarkConfig,
    pub head_back: LandmarkConfig,
    pub glabella: LandmarkConfig,
}

/// Head- and wrist-attached landmark offsets. The head landmarks scale with
/// stature (they are anatomy); the outer-palm anchors are part of the palm
/// protocol and are fixed lengths shared with the guiding hand.
#[derive(Debug, Clone)]
pub struct Landmarks {
    /// Head-local, stature-scalable.
    pub nose_tip: Vec3,
    pub head_back: Vec3,
    pub glabella: Vec3,
}

/// One surface sample: `local` is expressed in the frame of the parent joint
/// of `bone` (the bone is named by its child joint).
#[derive(Debug, Clone, Copy)]
pub struct SurfaceSample {
    pub bone: usize,
    pub local: Vec3,
}

#[derive(Debug, Clone)]
pub struct Skeleton {
    /// parent[j]; parent[PELVIS] = usize::MAX.
    pub parent: [usize; JOINT_COUNT],
    /// Rest offset of joint j from its parent, in the parent frame (meters).
    pub offsets: [Vec3; JOINT_COUNT],
    /// Capsule radius of the bone ending at joint j (meters).
    pub radii: [f64; JOINT_COUNT],
    /// Rotation cone limit per joint (radians); index 0 is the root.
    pub limits: [f64; JOINT_COUNT],
    /// Children of each joint, ascending.
    pub children: Vec<Vec<usize>>,
    pub landmarks: Landmarks,
    /// Deterministic capsule surface samples (≥ 1000 points).
    pub surface: Vec<SurfaceSample>,
    /// surface_mirror_map[k] = index of the sample that is the exact
    /// body-sagittal (y-negated, side-swapped) mirror of sample k.
    pub surface_mirror_map: Vec<usize>,
    /// Rest-pose root height above the lowest surface sample (meters).
    pub rest_root_z: f64,
    /// Rest-pose ankle-joint height above the lowest foot-bone sample.
    pub ankle_rest_height: f64,
}

impl Skeleton {
    pub fn default_config() -> SkeletonConfig {
        // Pass 1: raw table → rest joint positions → sampled surface height.
        let raw: Vec<(String, Option<String>, Vec3, f64, f64)> = RAW_JOINTS
            .iter()
            .map(|(n, p, o, r, l)| {
                (n.to_string(), p.map(str::to_string), Vec3::new(o[0], o[1], o[2]), *r, *l)
            })
            .collect();
        let unscaled = config_from_rows(&raw, RAW_NOSE_TIP, RAW_HEAD_BACK, RAW_GLABELLA);
        let temp = Skeleton::from_config(&unscaled).expect("built-in skeleton table is valid");
        let (min_z, max_z) = temp.rest_surface_z_range();
        let s = DEFAULT_HEIGHT / (max_z - min_z);

        // Pass 2: uniformly scale offsets, radii, and head landmarks.
        let scaled: Vec<(String, Option<String>, Vec3, f64, f64)> = raw
            .into_iter()
            .map(|(n, p, o, r, l)| (n, p, o * s, r * s, l))
            .collect();
        let scale3 = |v: [f64; 3]| [v[0] * s, v[1] * s, v[2] * s];
        config_from_rows(&scaled, scale3(RAW_NOSE_TIP), scale3(RAW_HEAD_BACK), scale3(RAW_GLABELLA))
    }

    pub fn from_config(config: &SkeletonConfig) -> Result<Skeleton> {
        if config.joints.len() != JOINT_COUNT {
            return Err(Error::Config(format!(
                "skeleton needs {} joints, got {}",
                JOINT_COUNT,
                config.joints.len()
            )));
        }
        let index_of = |name: &str| -> Result<usize> {
            JOINT_NAMES
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| Error::Config(format!("unknown joint name `{name}`")))
        };

        let mut parent = [usize::MAX; JOINT_COUNT];
        let mut offsets = [Vec3::ZERO; JOINT_COUNT];
        let mut radii = [0.0; JOINT_COUNT];
        let mut limits = [0.0; JOINT_COUNT];
        let mut seen = [false; JOINT_COUNT];
        for jc in &config.joints {
            let j = index_of(&jc.name)?;
            if seen[j] {
                return Err(Error::Config(format!("duplicate joint `{}`", jc.name)));
            }
            seen[j] = true;
            offsets[j] = Vec3::new(jc.offset[0], jc.offset[1], jc.offset[2]);
            radii[j] = jc.bone_radius;
            limits[j] = jc.limit_deg.to_radians();
            match (&jc.parent, j) {
                (None, PELVIS) => {}
                (None, _) => {
                    return Err(Error::Config(format!(
                        "joint `{}` must have a parent; only pelvis is the root",
                        jc.name
                    )))
                }
                (Some(_), PELVIS) => {
                    return Err(Error::Config("pelvis must not have a parent".into()))
                }
                (Some(p), _) => parent[j] = index_of(p)?,
            }
        }

        // Tree rooted at the pelvis: every non-root joint must reach the
        // pelvis through parents without cycles.
        for j in 1..JOINT_COUNT {
            let mut cur = j;
            let mut hops = 0;
            while cur != PELVIS {
                cur = parent[cur];
                hops += 1;
                if cur == usize::MAX || hops > JOINT_COUNT {
                    return Err(Error::Config(format!(
                        "joint `{}` is not connected to the pelvis",
                        JOINT_NAMES[j]
                    )));
                }
            }
        }

        for j in 1..JOINT_COUNT {
            if !(offsets[j].norm() > 0.0) {
                return Err(Error::Config(format!(
                    "bone to `{}` has non-positive length",
                    JOINT_NAMES[j]
                )));
            }
            if !(radii[j] > 0.0) {
                return Err(Error::Config(format!(
                    "bone to `{}` has non-positive radius",
                    JOINT_NAMES[j]
                )));
            }
            if !(limits[j] > 0.0) {
                return Err(Error::Config(format!(
                    "joint `{}` has non-positive limit",
                    JOINT_NAMES[j]
                )));
            }
        }

        // Bilateral symmetry: every left offset must be the exact y-negation
        // of its right counterpart (and parents must correspond).
        for j in 0..JOINT_COUNT {
            let m = mirror_joint(j);
            if m == j {
                continue;
            }
            let want = Vec3::new(offsets[m].x, -offsets[m].y, offsets[m].z);
            if (offsets[j] - want).norm() > 1e-12 {
                return Err(Error::Config(format!(
                    "offsets of `{}` and `{}` are not mirror-symmetric",
                    JOINT_NAMES[j], JOINT_NAMES[m]
                )));
            }
            if (radii[j] - radii[m]).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "radii of `{}` and `{}` differ",
                    JOINT_NAMES[j], JOINT_NAMES[m]
                )));
            }
            if parent[j] != usize::MAX && mirror_joint(parent[j]) != parent[m] {
                return Err(Error::Config(format!(
                    "parents of `{}` and `{}` are not mirror-symmetric",
                    JOINT_NAMES[j], JOINT_NAMES[m]
                )));
            }
        }

        let mut children: Vec<Vec<usize>> = vec![Vec::new(); JOINT_COUNT];
        for j in 1..JOINT_COUNT {
            children[parent[j]].push(j);
        }

        let head = index_of(&config.nose_tip.joint)?;
        if head != HEAD
            || index_of(&config.head_back.joint)? != HEAD
            || index_of(&config.glabella.joint)? != HEAD
        {
            return Err(Error::Config("face landmarks must attach to the head joint".into()));
        }
        let lm = |l: &LandmarkConfig| Vec3::new(l.local[0], l.local[1], l.local[2]);
        let landmarks = Landmarks {
            nose_tip: lm(&config.nose_tip),
            head_back: lm(&config.head_back),
            glabella: lm(&config.glabella),
        };

        let (surface, surface_mirror_map) = sample_surface(&offsets, &radii);

        let mut skel = Skeleton {
            parent,
            offsets,
            radii,
            limits,
            children,
            landmarks,
            surface,
            surface_mirror_map,
            rest_root_z: 0.0,
            ankle_rest_height: 0.0,
        };
        let (min_z, _) = skel.rest_surface_z_range();
        skel.rest_root_z = -min_z;

        // Ankle height above the lowest foot-bone sample at rest.
        let rest = skel.rest_joint_positions();
        let mut foot_min = f64::INFINITY;
        for s in &skel.surface {
            if s.bone == L_FOOT || s.bone == R_FOOT {
                foot_min = foot_min.min(rest[skel.parent[s.bone]].z + s.local.z);
            }
        }
        skel.ankle_rest_height = rest[L_ANKLE].z - foot_min;

        Ok(skel)
    }

    pub fn to_config(&self) -> SkeletonConfig {
        let rows: Vec<(String, Option<String>, Vec3, f64, f64)> = (0..JOINT_COUNT)
            .map(|j| {
                (
                    JOINT_NAMES[j].to_string(),
                    (j != PELVIS).then(|| JOINT_NAMES[self.parent[j]].to_string()),
                    self.offsets[j],
                    self.radii[j],
                    self.limits[j],
                )
            })
            .collect();
        config_from_rows(
            &rows,
            [self.landmarks.nose_tip.x, self.landmarks.nose_tip.y, self.landmarks.nose_tip.z],
            [self.landmarks.head_back.x, self.landmarks.head_back.y, self.landmarks.head_back.z],
            [self.landmarks.glabella.x, self.landmarks.glabella.y, self.landmarks.glabella.z],
        )
    }

    /// Joint world positions at the rest pose with the root at the origin.
    pub fn rest_joint_positions(&self) -> [Vec3; JOINT_COUNT] {
        let mut pos = [Vec3::ZERO; JOINT_COUNT];
        for j in 1..JOINT_COUNT {
            pos[j] = pos[self.parent[j]] + self.offsets[j];
        }
        pos
    }

    /// (min z, max z) over rest-pose surface samples with the root at the
    /// origin.
    fn rest_surface_z_range(&self) -> (f64, f64) {
        let pos = self.rest_joint_positions();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in &self.surface {
            let z = pos[self.parent[s.bone]].z + s.local.z;
            lo = lo.min(z);
            hi = hi.max(z);
        }
        (lo, hi)
    }

    /// Bone length from a joint's parent to the joint.
    pub fn bone_length(&self, joint: usize) -> f64 {
        self.offsets[joint].norm()
    }

    pub fn side_joints(h: Handedness) -> (usize, usize, usize, usize) {
        match h {
            Handedness::Right => (R_COLLAR, R_SHOULDER, R_ELBOW, R_WRIST),
            Handedness::Left => (L_COLLAR, L_SHOULDER, L_ELBOW, L_WRIST),
        }
    }

    /// Wrist-local thumb axis of the palm protocol frame.
    pub fn wrist_thumb_axis(_h: Handedness) -> Vec3 {
        Vec3::X
    }

    /// Wrist-local finger axis: −y on the right hand, +y on the left (the
    /// exact sagittal mirror of the right frame).
    pub fn wrist_finger_axis(h: Handedness) -> Vec3 {
        match h {
            Handedness::Right => Vec3::new(0.0, -1.0, 0.0),
            Handedness::Left => Vec3::Y,
        }
    }

    /// Wrist-local palm-side normal (the palm faces local −z... see
    /// `wrist_palm_out_dir`): +z is the *back-of-hand* side opposite the palm
    /// surface that contacts objects.
    pub fn wrist_palm_normal(_h: Handedness) -> Vec3 {
        Vec3::Z
    }

    /// Wrist-local outward palm direction (from the first outer-palm anchor
    /// toward the second): −z, the side the palm surface faces.
    pub fn wrist_palm_out_dir(_h: Handedness) -> Vec3 {
        Vec3::new(0.0, 0.0, -1.0)
    }
}

impl Default for Skeleton {
    fn default() -> Self {
        Skeleton::from_config(&Skeleton::default_config()).expect("default config is valid")
    }
}

fn config_from_rows(
    rows: &[(String, Option<String>, Vec3, f64, f64)],
    nose_tip: [f64; 3],
    head_back: [f64; 3],
    glabella: [f64; 3],
) -> SkeletonConfig {
    SkeletonConfig {
        joints: rows
            .iter()
            .map(|(n, p, o, r, l)| JointConfig {
                name: n.clone(),
                parent: p.clone(),
                offset: [o.x, o.y, o.z],
                bone_radius: *r,
                limit_deg: l.to_degrees(),
            })
            .collect(),
        nose_tip: LandmarkConfig { joint: "head".into(), local: nose_tip },
        head_back: LandmarkConfig { joint: "head".into(), local: head_back },
        glabella: LandmarkConfig { joint: "head".into(), local: glabella },
    }
}

/// Ring of `RING_SAMPLES` points around `center` in the (u, v) plane, where
/// the second half of the ring is the exact v-negation of the first half.
/// With v = ±y this makes y-negated rings bitwise-equal as sets under the
/// index map j ↔ (m − j) mod m.
fn ring_points(center: Vec3, u: Vec3, v: Vec3) -> Vec<Vec3> {
    let m = RING_SAMPLES;
    let mut cs = Vec::with_capacity(m);
    for j in 0..=m / 2 {
        if 2 * j == m {
            // Exact half-turn: sin(π) rounds to ~1e-16, but this point is
            // its own mirror image, so its v-component must be exactly 0.
            cs.push((-1.0, 0.0));
        } else {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
            cs.push((phi.cos(), phi.sin()));
        }
    }
    for j in m / 2 + 1..m {
        let (c, s) = cs[m - j];
        cs.push((c, -s));
    }
    cs.into_iter().map(|(c, s)| center + u * c + v * s).collect()
}

/// Deterministic capsule samples for one bone: cylinder rings spaced at most
/// `RING_SPACING` apart plus two spherical caps (rings at 30° and 60° from
/// each pole, and the poles themselves). Returns points in the parent frame.
fn sample_bone(offset: Vec3, radius: f64) -> Vec<Vec3> {
    let len = offset.norm();
    let axis = offset / len;
    let e1 = if axis.x.abs() < 1e-9 && axis.y.abs() < 1e-9 {
        // Pure-z bones use the world x axis so rings are y-symmetric.
        Vec3::X
    } else {
        axis.any_orthonormal()
    };
    let e2 = axis.cross(e1);

    let mut pts = Vec::new();
    let n_rings = (len / RING_SPACING).ceil().max(1.0) as usize;
    for k in 0..n_rings {
        let t = (k as f64 + 0.5) * len / n_rings as f64;
        pts.extend(ring_points(axis * t, e1 * radius, e2 * radius));
    }
    for (end, dir) in [(0.0, -1.0), (len, 1.0)] {
        for psi_deg in [30.0f64, 60.0] {
            let psi = psi_deg.to_radians();
            let center = axis * (end + dir * radius * psi.cos());
            pts.extend(ring_points(center, e1 * (radius * psi.sin()), e2 * (radius * psi.sin())));
        }
        pts.push(axis * (end + dir * radius));
    }
    pts
}

/// Sample all 21 bones. Right-side bones are sampled directly; left-side
/// bones are the exact y-negation of their right counterparts, and midline
/// bones are y-symmetric by ring construction. Returns the samples plus the
/// index map of the exact sagittal mirror.
fn sample_surface(
    offsets: &[Vec3; JOINT_COUNT],
    radii: &[f64; JOINT_COUNT],
) -> (Vec<SurfaceSample>, Vec<usize>) {
    let mut surface: Vec<SurfaceSample> = Vec::new();
    // start[j] = index of the first sample of bone j.
    let mut start = [usize::MAX; JOINT_COUNT];
    let mut count = [0usize; JOINT_COUNT];

    for j in 1..JOINT_COUNT {
        let m = mirror_joint(j);
        start[j] = surface.len();
        if m < j {
            // Left bone: mirror the already-sampled right bone exactly.
            for k in 0..count[m] {
                let p = surface[start[m] + k].local;
                surface.push(SurfaceSample { bone: j, local: Vec3::new(p.x, -p.y, p.z) });
            }
            count[j] = count[m];
        } else {
            let pts = sample_bone(offsets[j], radii[j]);
            count[j] = pts.len();
            surface.extend(pts.into_iter().map(|local| SurfaceSample { bone: j, local }));
        }
    }

    // Mirror map. Paired bones: sample k of one side ↔ sample k of the
    // other. Midline bones: rings are y-symmetric under j ↔ (m−j) mod m,
    // which `mirror_within_ring` encodes per 8-point ring; poles map to
    // themselves.
    let mut map = vec![0usize; surface.len()];
    for j in 1..JOINT_COUNT {
        let m = mirror_joint(j);
        for k in 0..count[j] {
            let idx = start[j] + k;
            map[idx] =
                if m != j { start[m] + k } else { start[j] + mirror_within_bone(k, count[j]) };
        }
    }
    (surface, map)
}

/// For a midline bone's sample index, the index of its y-negated twin.
/// `sample_bone` emits cylinder rings of 8 (total − 34 points), then per cap
/// two rings of 8 and a pole; within a ring the y-mirror is j ↔ (8−j) mod 8
/// and poles (on the ±z axis) map to themselves.
fn mirror_within_bone(k: usize, total: usize) -> usize {
    let in_ring = |j: usize| (RING_SAMPLES - j) % RING_SAMPLES;
    let cyl = total - 34;
    if k < cyl {
        let base = k / RING_SAMPLES * RING_SAMPLES;
        return base + in_ring(k - base);
    }
    // Tail layout per cap: ring(8), ring(8), pole(1); two caps.
    let tail = k - cyl;
    let cap = tail / 17;
    let within = tail % 17;
    let mapped = if within == 16 {
        within
    } else {
        within / RING_SAMPLES * RING_SAMPLES + in_ring(within % RING_SAMPLES)
    };
    cyl + cap * 17 + mapped
}
