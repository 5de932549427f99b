//! Visual contact pressure estimation for a compliant gripper, trained from a
//! small fully labeled set (pressure maps) plus a large weakly labeled set
//! (wrist force/torque only).
//!
//! The crate covers the whole loop at desk scale:
//!
//! - [`synthworld`]: a deterministic simulated gripper, pressure mat and
//!   force/torque sensor that renders camera images in two visual domains.
//! - [`geometry`]: pinhole camera and table-plane projections.
//! - [`data`]: frames, pressure binning, augmentation and batching.
//! - [`model`] and [`nn`]: the shared-encoder network with pressure,
//!   force/torque and domain heads.
//! - [`training`]: losses, the optimization loop and ablation switches.
//! - [`eval`]: volumetric IoU, contact accuracy and force/torque RMSE.
//! - [`servo`]: the pressure-based grasping controller.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod model;
pub mod nn;
pub mod servo;
pub mod synthworld;
pub mod training;
pub mod types;

pub use error::{Error, Result};
pub use types::{Domain, PressureGrid, PressureImage, Wrench};
