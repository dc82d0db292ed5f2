//! Grasp perception geometry toolkit.
//!
//! - [`se3`]: pose algebra, grasp poses and the object-frame grasp distance.
//! - [`annotation`]: dense analytic grasp labels and association labels.
//! - [`collision`]: gripper occupancy, collision checks, gripper centering.
//! - [`association`]: grasp descriptors, correspondence matrices and the
//!   supervised contrastive loss with a trainable linear embedding.
//! - [`tracking`]: the dynamic grasping controller.
//! - [`simulator`]: a deterministic kinematic scene with a noisy depth sensor.
//! - [`eval`]: ranked-grasp AP curves and dataset downsampling.
//! - [`registry`]: named tracking policies and feature providers.

pub mod annotation;
pub mod association;
pub mod collision;
pub mod error;
pub mod eval;
pub mod io;
pub mod objects;
pub mod registry;
pub mod se3;
pub mod simulator;
pub mod spatial;
pub mod tracking;

pub use error::{Error, Result};
