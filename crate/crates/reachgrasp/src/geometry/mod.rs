//! Geometric foundations: vectors, rigid transforms, triangle meshes,
//! ray casting with a bounding-volume hierarchy, signed-distance queries,
//! voxel overlap measurement, sphere sampling, and OBJ/PLY serialization.

pub mod bvh;
pub mod mesh;
pub mod obj;
pub mod ply;
pub mod query;
pub mod ray;
pub mod sphere;
pub mod transform;
pub mod vec3;
pub mod voxel;

pub use bvh::AccelIndex;
pub use mesh::{
    make_box, make_box_centered, make_icosphere, make_l_prism, mirror_mesh, TriMesh,
};
pub use obj::{load_obj, parse_obj, save_obj, write_obj};
pub use ply::{heat_color, write_point_cloud_ply};
pub use query::IndexedMesh;
pub use ray::{HitRecord, Ray};
pub use sphere::sphere_directions;
pub use transform::{rotate_about_vertical, Mat3, PlaneReflection, RigidTransform};
pub use vec3::Vec3;
pub use voxel::penetration_volume;
