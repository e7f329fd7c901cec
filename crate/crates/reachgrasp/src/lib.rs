//! Whole-body reach-and-grasp pose synthesis around 3D scenes.
//!
//! Given a watertight object mesh resting on or inside a receptacle, the
//! pipeline proposes a feasible approach direction, synthesizes a guiding
//! hand on the object surface, solves a whole-body reaching pose for a
//! 22-joint capsule skeleton, and refines that pose with a two-stage
//! gradient optimizer until the body's palm matches the guiding hand while
//! staying out of the scene geometry and on the ground.
//!
//! The crate is organized along the pipeline stages:
//!
//! - [`geometry`]: meshes, ray casting, signed distance, voxel overlap.
//! - [`scene`]: scene configs, procedural receptacles, object placement.
//! - [`field`]: the probabilistic field of approach directions.
//! - [`body`]: skeleton, forward kinematics, the analytic reach solver.
//! - [`hand`]: guiding-hand synthesis on the object surface.
//! - [`autodiff`]: the scalar reverse-mode tape behind the optimizer.
//! - [`optim`]: loss terms and the two-stage Adam schedule.
//! - [`metrics`]: contact, penetration, diversity, and conditioning metrics.
//! - [`pipeline`]: end-to-end runs and on-disk artifacts used by the CLI.

pub mod autodiff;
pub mod body;
pub mod error;
pub mod field;
pub mod geometry;
pub mod hand;
pub mod metrics;
pub mod optim;
pub mod palm;
pub mod par;
pub mod pipeline;
pub mod scene;

pub use error::{Error, Result};
