//! Scene assembly: a posed object resting on a receptacle above the ground
//! plane at z = 0, loaded from a JSON config or generated procedurally.

use crate::error::{Error, Result};
use crate::geometry::mesh::{make_box, mirror_mesh, TriMesh};
use crate::geometry::query::IndexedMesh;
use crate::geometry::ray::{HitRecord, Ray};
use crate::geometry::transform::{Mat3, PlaneReflection, RigidTransform};
use crate::geometry::vec3::Vec3;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Which hand the synthesized body should reach with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Right,
    Left,
}

impl Handedness {
    pub fn other(self) -> Self {
        match self {
            Handedness::Right => Handedness::Left,
            Handedness::Left => Handedness::Right,
        }
    }
}

/// Rigid transform as it appears in config JSON: row-major rotation matrix
/// plus a translation in meters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseConfig {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl PoseConfig {
    pub fn identity() -> Self {
        PoseConfig {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0, 0.0, 0.0],
        }
    }

    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform {
            rotation: Mat3(self.rotation),
            translation: Vec3::new(
                self.translation[0],
                self.translation[1],
                self.translation[2],
            ),
        }
    }
}

/// On-disk scene description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneConfig {
    pub object_mesh: PathBuf,
    pub receptacle_mesh: PathBuf,
    pub object_pose: PoseConfig,
    pub seed: u64,
    pub handedness: Handedness,
    /// Extra static meshes that block rays but are not the receptacle.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub occluders: Vec<PathBuf>,
}

/// Which scene mesh a ray hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitTarget {
    Object,
    Receptacle,
    Occluder(usize),
}

impl HitTarget {
    /// Deterministic tie-break order when two meshes are hit at the same
    /// distance.
    fn rank(self) -> usize {
        match self {
            HitTarget::Object => 0,
            HitTarget::Receptacle => 1,
            HitTarget::Occluder(k) => 2 + k,
        }
    }
}

/// A fully assembled scene: the posed object, its receptacle, optional
/// occluders, and the object's centroid and height above the ground.
pub struct Scene {
    pub object: IndexedMesh,
    pub receptacle: IndexedMesh,
    pub occluders: Vec<IndexedMesh>,
    /// Mean of the posed object's vertices.
    pub centroid: Vec3,
    /// Height of the centroid above the ground plane (meters).
    pub object_height: f64,
    pub seed: u64,
    pub handedness: Handedness,
}

impl std::fmt::Debug for Scene {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scene")
            .field("object_triangles", &self.object.mesh.triangles.len())
            .field("receptacle_triangles", &self.receptacle.mesh.triangles.len())
            .field("occluders", &self.occluders.len())
            .field("centroid", &self.centroid)
            .field("object_height", &self.object_height)
            .field("seed", &self.seed)
            .field("handedness", &self.handedness)
            .finish()
    }
}

impl Scene {
    /// Assembles and validates a scene from already-posed meshes.
    ///
    /// Validation: the object must be watertight (signed distance against it
    /// is needed downstream), must sit entirely above the ground plane, and
    /// must not start out penetrating the receptacle by more than 1 mm
    /// (checked at the object's vertices when the receptacle is watertight).
    pub fn from_parts(
        object: TriMesh,
        receptacle: TriMesh,
        occluders: Vec<TriMesh>,
        seed: u64,
        handedness: Handedness,
    ) -> Result<Self> {
        if !object.is_watertight() {
            return Err(Error::Mesh(
                "object mesh must be watertight (inside/outside queries are required)".into(),
            ));
        }
        let min_z = object
            .vertices
            .iter()
            .map(|v| v.z)
            .fold(f64::INFINITY, f64::min);
        if min_z < -1e-9 {
            return Err(Error::Scene(format!(
                "object dips below the ground plane (min vertex z = {min_z:.6} m)"
            )));
        }
        let centroid = object.vertex_centroid();
        let object = IndexedMesh::new(object);
        let receptacle = IndexedMesh::new(receptacle);
        if receptacle.mesh.is_watertight() {
            for (i, v) in object.mesh.vertices.iter().enumerate() {
                let sd = receptacle.signed_distance(*v)?;
                if sd < -1e-3 {
                    return Err(Error::Scene(format!(
                        "object vertex {i} penetrates the receptacle by {:.4} mm (limit 1 mm)",
                        -sd * 1e3
                    )));
                }
            }
        }
        let occluders = occluders.into_iter().map(IndexedMesh::new).collect();
        Ok(Scene {
            object,
            receptacle,
            occluders,
            centroid,
            object_height: centroid.z,
            seed,
            handedness,
        })
    }

    fn meshes(&self) -> impl Iterator<Item = (&IndexedMesh, HitTarget)> {
        std::iter::once((&self.object, HitTarget::Object))
            .chain(std::iter::once((&self.receptacle, HitTarget::Receptacle)))
            .chain(
                self.occluders
                    .iter()
                    .enumerate()
                    .map(|(k, m)| (m, HitTarget::Occluder(k))),
            )
    }

    /// First hit of `ray` against any scene mesh. Exact distance ties go to
    /// the object, then the receptacle, then occluders in order.
    pub fn first_hit(&self, ray: &Ray) -> Option<(HitRecord, HitTarget)> {
        let mut best: Option<(HitRecord, HitTarget)> = None;
        for (mesh, target) in self.meshes() {
            if let Some(hit) = mesh.ray_cast(ray) {
                let better = match &best {
                    None => true,
                    Some((b, bt)) => {
                        hit.distance < b.distance
                            || (hit.distance == b.distance && target.rank() < bt.rank())
                    }
                };
                if better {
                    best = Some((hit, target));
                }
            }
        }
        best
    }

    /// First hit against the non-object meshes only (receptacle + occluders).
    pub fn first_hit_excluding_object(&self, ray: &Ray) -> Option<(HitRecord, HitTarget)> {
        let mut best: Option<(HitRecord, HitTarget)> = None;
        for (mesh, target) in self.meshes().skip(1) {
            if let Some(hit) = mesh.ray_cast(ray) {
                let better = match &best {
                    None => true,
                    Some((b, bt)) => {
                        hit.distance < b.distance
                            || (hit.distance == b.distance && target.rank() < bt.rank())
                    }
                };
                if better {
                    best = Some((hit, target));
                }
            }
        }
        best
    }

    /// Mirrors the whole scene through a vertical plane, flipping handedness.
    pub fn mirrored(&self, plane: &PlaneReflection) -> Result<Scene> {
        let object = mirror_mesh(&self.object.mesh, plane);
        let receptacle = mirror_mesh(&self.receptacle.mesh, plane);
        let occluders = self
            .occluders
            .iter()
            .map(|m| mirror_mesh(&m.mesh, plane))
            .collect();
        Scene::from_parts(
            object,
            receptacle,
            occluders,
            self.seed,
            self.handedness.other(),
        )
    }
}

/// Loads a scene config from a JSON file, resolving relative mesh paths
/// against the config file's directory.
pub fn load_scene_config(path: &Path) -> Result<SceneConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut config: SceneConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if let Some(dir) = path.parent() {
        let resolve = |p: &PathBuf| {
            if p.is_relative() {
                dir.join(p)
            } else {
                p.clone()
            }
        };
        config.object_mesh = resolve(&config.object_mesh);
        config.receptacle_mesh = resolve(&config.receptacle_mesh);
        config.occluders = config.occluders.iter().map(resolve).collect();
    }
    Ok(config)
}

/// Loads meshes, applies the object pose, and assembles a validated scene.
pub fn load_scene(config: &SceneConfig) -> Result<Scene> {
    let pose = config.object_pose.to_transform();
    pose.validate(1e-9)
        .map_err(|e| Error::Config(format!("object_pose: {e}")))?;
    let mut object = crate::geometry::obj::load_obj(&config.object_mesh)?;
    let receptacle = crate::geometry::obj::load_obj(&config.receptacle_mesh)?;
    let occluders = config
        .occluders
        .iter()
        .map(|p| crate::geometry::obj::load_obj(p))
        .collect::<Result<Vec<_>>>()?;
    object.apply_transform(&pose);
    Scene::from_parts(object, receptacle, occluders, config.seed, config.handedness)
}

/// Clearance left between an object and its support after placement.
const PLACEMENT_GAP: f64 = 5e-5;

/// Computes the rigid transform that centers `object` horizontally at
/// `(probe.x, probe.y)` and lowers it until its lowest vertex rests on the
/// first upward-facing receptacle surface found below the horizontal plane
/// z = `probe.z` (the ground plane z = 0 when nothing else is underneath).
///
/// `probe.z` selects which cavity the object drops through: supports are
/// searched downward starting from that height, so a probe inside a shelf
/// opening lands the object on that shelf rather than on the unit's roof.
pub fn drop_place(object: &TriMesh, receptacle: &TriMesh, probe: Vec3) -> Result<RigidTransform> {
    let support = IndexedMesh::new(receptacle.clone());
    let c = object.vertex_centroid();
    let dx = probe.x - c.x;
    let dy = probe.y - c.y;
    // For each vertex column, the height of the first upward-facing surface
    // below the probe plane (ground if none).
    let mut drop = f64::NEG_INFINITY;
    for v in &object.vertices {
        let origin = Vec3::new(v.x + dx, v.y + dy, probe.z);
        let ray = Ray::new(origin, -Vec3::Z, probe.z + 1.0);
        let mut support_z = 0.0f64;
        for hit in support.ray_cast_all(&ray) {
            let [a, b, cc] = receptacle.triangles[hit.triangle_index as usize];
            let (pa, pb, pc) = (
                receptacle.vertices[a as usize],
                receptacle.vertices[b as usize],
                receptacle.vertices[cc as usize],
            );
            let normal = (pb - pa).cross(pc - pa);
            if normal.z > 1e-9 {
                support_z = hit.point.z.max(0.0);
                break;
            }
        }
        drop = drop.max(support_z - v.z);
    }
    if !drop.is_finite() {
        return Err(Error::Scene("object mesh has no vertices to place".into()));
    }
    Ok(RigidTransform {
        rotation: Mat3::identity(),
        translation: Vec3::new(dx, dy, drop + PLACEMENT_GAP),
    })
}

/// Horizontal direction a receptacle opening faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heading {
    PlusX,
    MinusX,
    PlusY,
    MinusY,
}

impl Heading {
    /// Quarter-turn yaw (exact 0/±1 matrix) mapping the native +x opening to
    /// this heading.
    fn yaw(self) -> Mat3 {
        match self {
            Heading::PlusX => Mat3::identity(),
            Heading::PlusY => Mat3([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]),
            Heading::MinusX => Mat3([[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]]),
            Heading::MinusY => Mat3([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]),
        }
    }

    pub fn direction(self) -> Vec3 {
        match self {
            Heading::PlusX => Vec3::X,
            Heading::MinusX => -Vec3::X,
            Heading::PlusY => Vec3::Y,
            Heading::MinusY => -Vec3::Y,
        }
    }
}

/// Which face of an open box is missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxOpening {
    Up,
    Side(Heading),
}

/// Parametric receptacle families used by tests and the scene generator.
#[derive(Debug, Clone)]
pub enum ReceptacleSpec {
    /// Four legs under a slab top; the work surface is the top face.
    Table { width: f64, depth: f64, height: f64 },
    /// Enclosed unit with one open side and optional interior shelf boards
    /// whose top faces sit at the given heights.
    Shelf {
        width: f64,
        depth: f64,
        height: f64,
        opening: Heading,
        shelf_heights: Vec<f64>,
    },
    /// Five-sided box with one face missing.
    OpenBox {
        width: f64,
        depth: f64,
        height: f64,
        opening: BoxOpening,
    },
    /// Cabinet mounted on a free-standing wall, opening away from the wall
    /// toward +x.
    WallCabinet {
        width: f64,
        depth: f64,
        height: f64,
        mount_height: f64,
    },
}

/// Panel thickness shared by the receptacle families.
const WALL_T: f64 = 0.02;
/// Table-top slab thickness.
const TOP_T: f64 = 0.04;
/// Leg cross-section edge.
const LEG_T: f64 = 0.05;
/// Clearance between adjacent panels. Each panel is a closed box; keeping
/// them disjoint keeps the merged mesh watertight and parity-based
/// inside/outside tests valid.
const PANEL_GAP: f64 = 2e-4;

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "receptacle dimension {name} must be positive, got {v}"
        )))
    }
}

/// Builds one of the parametric receptacle families as a watertight mesh.
pub fn make_receptacle(spec: &ReceptacleSpec) -> Result<TriMesh> {
    match spec {
        ReceptacleSpec::Table {
            width,
            depth,
            height,
        } => make_table(*width, *depth, *height),
        ReceptacleSpec::Shelf {
            width,
            depth,
            height,
            opening,
            shelf_heights,
        } => make_shelf(*width, *depth, *height, *opening, shelf_heights),
        ReceptacleSpec::OpenBox {
            width,
            depth,
            height,
            opening,
        } => make_open_box(*width, *depth, *height, *opening),
        ReceptacleSpec::WallCabinet {
            width,
            depth,
            height,
            mount_height,
        } => make_wall_cabinet(*width, *depth, *height, *mount_height),
    }
}

fn slab(lo: Vec3, hi: Vec3) -> TriMesh {
    make_box(lo, hi)
}

fn make_table(w: f64, d: f64, h: f64) -> Result<TriMesh> {
    require_positive("width", w)?;
    require_positive("depth", d)?;
    require_positive("height", h)?;
    if w < 2.0 * (LEG_T + 0.04) || d < 2.0 * (LEG_T + 0.04) || h <= TOP_T + PANEL_GAP + 0.05 {
        return Err(Error::Config(
            "table dimensions too small for legs and top".into(),
        ));
    }
    let mut mesh = slab(
        Vec3::new(-w / 2.0, -d / 2.0, h - TOP_T),
        Vec3::new(w / 2.0, d / 2.0, h),
    );
    let leg_top = h - TOP_T - PANEL_GAP;
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            let cx = sx * (w / 2.0 - 0.02 - LEG_T / 2.0);
            let cy = sy * (d / 2.0 - 0.02 - LEG_T / 2.0);
            mesh.merge(&slab(
                Vec3::new(cx - LEG_T / 2.0, cy - LEG_T / 2.0, 0.0),
                Vec3::new(cx + LEG_T / 2.0, cy + LEG_T / 2.0, leg_top),
            ));
        }
    }
    Ok(mesh)
}

/// Native shelf (opening +x): floor and roof slabs span the full footprint,
/// the back panel closes −x, side panels close ±y, and each interior board
/// is inset so every panel stays a disjoint closed box.
fn make_shelf(
    w: f64,
    d: f64,
    h: f64,
    opening: Heading,
    shelf_heights: &[f64],
) -> Result<TriMesh> {
    require_positive("width", w)?;
    require_positive("depth", d)?;
    require_positive("height", h)?;
    let t = WALL_T;
    let g = PANEL_GAP;
    if w <= 2.0 * t + 0.05 || d <= 2.0 * t + 0.05 || h <= 2.0 * t + 0.05 {
        return Err(Error::Config("shelf dimensions too small for panels".into()));
    }
    let mut mesh = slab(Vec3::new(-w / 2.0, -d / 2.0, 0.0), Vec3::new(w / 2.0, d / 2.0, t));
    mesh.merge(&slab(
        Vec3::new(-w / 2.0, -d / 2.0, h - t),
        Vec3::new(w / 2.0, d / 2.0, h),
    ));
    // Back panel (full y), then side panels inset in x so they stay clear of it.
    mesh.merge(&slab(
        Vec3::new(-w / 2.0, -d / 2.0, t + g),
        Vec3::new(-w / 2.0 + t, d / 2.0, h - t - g),
    ));
    for sy in [-1.0, 1.0] {
        let y0 = if sy < 0.0 { -d / 2.0 } else { d / 2.0 - t };
        mesh.merge(&slab(
            Vec3::new(-w / 2.0 + t + g, y0, t + g),
            Vec3::new(w / 2.0, y0 + t, h - t - g),
        ));
    }
    for (k, &z) in shelf_heights.iter().enumerate() {
        if z < 2.0 * t + g || z > h - 2.0 * t - g {
            return Err(Error::Config(format!(
                "shelf board {k} at z = {z} must lie inside the cavity"
            )));
        }
        mesh.merge(&slab(
            Vec3::new(-w / 2.0 + t + g, -d / 2.0 + t + g, z - t),
            Vec3::new(w / 2.0, d / 2.0 - t - g, z),
        ));
    }
    let yaw = opening.yaw();
    mesh.apply_transform(&RigidTransform {
        rotation: yaw,
        translation: Vec3::ZERO,
    });
    Ok(mesh)
}

fn make_open_box(w: f64, d: f64, h: f64, opening: BoxOpening) -> Result<TriMesh> {
    require_positive("width", w)?;
    require_positive("depth", d)?;
    require_positive("height", h)?;
    let t = WALL_T;
    let g = PANEL_GAP;
    if w <= 2.0 * t + 0.05 || d <= 2.0 * t + 0.05 || h <= 2.0 * t + 0.05 {
        return Err(Error::Config(
            "open box dimensions too small for walls".into(),
        ));
    }
    // Native construction opens +x; the upward opening skips the roof instead.
    let open_up = matches!(opening, BoxOpening::Up);
    let mut mesh = slab(Vec3::new(-w / 2.0, -d / 2.0, 0.0), Vec3::new(w / 2.0, d / 2.0, t));
    let wall_top = if open_up {
        h
    } else {
        mesh.merge(&slab(
            Vec3::new(-w / 2.0, -d / 2.0, h - t),
            Vec3::new(w / 2.0, d / 2.0, h),
        ));
        h - t - g
    };
    // Back wall at −x unless the box opens upward (then all four walls stand).
    if open_up {
        mesh.merge(&slab(
            Vec3::new(w / 2.0 - t, -d / 2.0 + t + g, t + g),
            Vec3::new(w / 2.0, d / 2.0 - t - g, wall_top),
        ));
    }
    mesh.merge(&slab(
        Vec3::new(-w / 2.0, -d / 2.0 + t + g, t + g),
        Vec3::new(-w / 2.0 + t, d / 2.0 - t - g, wall_top),
    ));
    for sy in [-1.0, 1.0] {
        let y0 = if sy < 0.0 { -d / 2.0 } else { d / 2.0 - t };
        mesh.merge(&slab(
            Vec3::new(-w / 2.0, y0, t + g),
            Vec3::new(w / 2.0, y0 + t, wall_top),
        ));
    }
    let yaw = match opening {
        BoxOpening::Up => Mat3::identity(),
        BoxOpening::Side(heading) => heading.yaw(),
    };
    let mut mesh = mesh;
    mesh.apply_transform(&RigidTransform {
        rotation: yaw,
        translation: Vec3::ZERO,
    });
    Ok(mesh)
}

fn make_wall_cabinet(w: f64, d: f64, h: f64, mount_height: f64) -> Result<TriMesh> {
    require_positive("width", w)?;
    require_positive("depth", d)?;
    require_positive("height", h)?;
    require_positive("mount_height", mount_height)?;
    let t = WALL_T;
    let g = PANEL_GAP;
    if w <= 2.0 * t + 0.05 || d <= 2.0 * t + 0.05 || h <= 2.0 * t + 0.05 {
        return Err(Error::Config(
            "cabinet dimensions too small for panels".into(),
        ));
    }
    // Free-standing wall behind the cabinet, grounded at z = 0.
    let wall_thickness = 0.06;
    let back_x = -0.02;
    let mut mesh = slab(
        Vec3::new(back_x - g - wall_thickness, -w / 2.0 - 0.3, 0.0),
        Vec3::new(back_x - g, w / 2.0 + 0.3, mount_height + h + 0.3),
    );
    let x0 = back_x;
    let x1 = back_x + d;
    let z0 = mount_height;
    let z1 = mount_height + h;
    // Cabinet back panel (full y and z), then floor/roof/side panels inset.
    mesh.merge(&slab(
        Vec3::new(x0, -w / 2.0, z0),
        Vec3::new(x0 + t, w / 2.0, z1),
    ));
    mesh.merge(&slab(
        Vec3::new(x0 + t + g, -w / 2.0, z0),
        Vec3::new(x1, w / 2.0, z0 + t),
    ));
    mesh.merge(&slab(
        Vec3::new(x0 + t + g, -w / 2.0, z1 - t),
        Vec3::new(x1, w / 2.0, z1),
    ));
    for sy in [-1.0, 1.0] {
        let y0 = if sy < 0.0 { -w / 2.0 } else { w / 2.0 - t };
        mesh.merge(&slab(
            Vec3::new(x0 + t + g, y0, z0 + t + g),
            Vec3::new(x1, y0 + t, z1 - t - g),
        ));
    }
    Ok(mesh)
}
