//! Modeling, redundant tension control, calibration and backlash compensation
//! for a tendon-driven steerable catheter with a constant-curvature bending
//! section, plus a simulated plant and experiment harness to exercise them.

pub mod calibration;
pub mod cli;
pub mod compensation;
pub mod config;
pub mod control;
pub mod harness;
pub mod model;
pub mod plant;

pub use compensation::{compensate, CompensatorSettings, CompensatorState};
pub use control::{allocate_tensions, inverse_kinematics, ControlError, ControlOptions};
pub use model::{Configuration, ModelError, RobotParams, TendonCommand, TipPose};
pub use plant::{PlantHandle, PlantSpec};
