//! Articulated 22-joint body: skeleton definition, forward kinematics
//! (generic over plain floats and tape-recorded scalars), pose types with
//! mirroring and handedness detection, and the deterministic
//! direction-conditioned reach solver.

pub mod fk;
pub mod pose;
pub mod reach;
pub mod skeleton;

pub use fk::{
    body_palm_patch, body_wrist_markers, forward_kinematics, landmark_positions, surface_points,
    Fk, PoseVars,
};
pub use pose::{
    arm_direction, body_mesh, detect_handedness, mirror_pose, BodyPose, BodySurface,
};
pub use reach::reach_solve;
pub use skeleton::{
    mirror_joint, Landmarks, Skeleton, SkeletonConfig, SurfaceSample, JOINT_COUNT, JOINT_NAMES,
};
