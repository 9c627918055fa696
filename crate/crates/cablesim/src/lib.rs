//! # cablesim
//!
//! Deterministic, seedable simulation of vision-based cable manipulation.
//! A synthetic depth-camera rig observes a sagging cable plugged into a wall
//! socket; the library models the cable as two per-plane quadratics, estimates
//! tip and grasp frames from the resampled chain, estimates the target socket
//! pose from a rendered wall view, and drives a PD pose-alignment controller
//! through the five-phase plug task: grasp the cable, unplug it, align the tip
//! with a pre-insert frame, and insert it into the second socket.
//!
//! The examples are the front door, one runnable program per capability:
//!
//! ```bash
//! cargo run -p cablesim --example socket_pose      # circle + plane -> socket frame
//! cargo run -p cablesim --example model_cable      # filter + dual-plane fit + chain
//! cargo run -p cablesim --example grasp_selection  # arc distances + grasp band
//! cargo run -p cablesim --example pose_alignment   # PD servo on the ideal plant
//! cargo run -p cablesim --example disturbance      # payload weights mid-alignment
//! cargo run -p cablesim --example plug_task        # the full five-phase task
//! cargo run -p cablesim --example campaign         # 20-seed batch + report
//! ```
//!
//! The `cablesim` binary exposes the same machinery for batch runs:
//!
//! ```bash
//! cablesim --scenario crates/cablesim/scenarios/canonical.json --seeds 0..20 --out out/
//! ```
//!
//! Everything is reproducible: a scenario file plus a seed determines every
//! random draw, so reruns produce byte-identical traces.

// Validations use `!(x > 0.0)` so NaN fails them too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cablemodel;
pub mod cli;
pub mod cloud;
pub mod controller;
pub mod frames;
pub mod perception;
pub mod scenario;
pub mod simworld;
pub mod taskfsm;

pub use cablemodel::{CableModel, GraspSpec, QuadCoeffs, SampledCable};
pub use cloud::{PointCloud, PointLabel};
pub use controller::{
    AlignmentConfig, AlignmentOutcome, ControllerGains, PoseDeviation, Thresholds, Twist,
    TwistLimits,
};
pub use frames::{FrameTree, RigidTransform, Rpy, Vec3};
pub use perception::{BoundingBox2D, CameraIntrinsics, DepthImage, PassThroughBounds, SocketEstimate};
pub use scenario::Scenario;
pub use simworld::WorldState;
pub use taskfsm::{Phase, TaskEvent, TaskMetrics};
