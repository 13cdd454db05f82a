//! Geometry-conditioned grasp contact prediction for multiple grippers.
//!
//! Objects and grippers are point-cloud graphs. A pair of GCN encoders
//! embeds both; a score map picks the first contact and five
//! autoregressive heads pick the rest. Predicted contacts become
//! pre-grasp targets for a bounded least-squares IK, and solved grasps are
//! scored by a quasi-static wrench test.
//!
//! All lengths are meters, angles radians.

pub mod config;
pub mod contact_maps;
pub mod dataset;
pub mod diffnet;
pub mod evaluation;
pub mod geometry;
pub mod ik;
pub mod inference;
pub mod kinematics;
pub mod model;
pub mod pipeline;
pub mod plot;
pub mod rng;
pub mod solver;

/// Crate version.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
