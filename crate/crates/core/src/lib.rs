//! Doppler-aware point-cloud registration and odometry for FMCW LiDAR.
//!
//! The pipeline estimates the sensor twist from per-point Doppler velocity,
//! separates dynamic from static points with a distance-adaptive velocity
//! filter, clusters the dynamic points into objects and reconstructs their
//! 3D translational velocities, warps them to the next frame under a
//! constant-velocity model, and finally aligns the scans with a two-term
//! robust ICP objective: point-to-plane geometry plus a translation-
//! invariant, rotation-only Doppler residual.
//!
//! A built-in synthetic FMCW scan generator with exact Doppler physics
//! serves as the ground-truth oracle for the test suites, and an
//! evaluation module computes relative pose errors at the frame gap.

pub mod cluster;
pub mod ego;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod kdtree;
pub mod object_velocity;
pub mod pipeline;
pub mod predict;
pub mod register;
pub mod scan;
pub mod synth;

pub use geometry::{exp_se3, log_se3, Pose, Rot3, Twist, Vec3};
pub use pipeline::{run_odometry, PipelineConfig};
pub use scan::{DopplerPoint, DopplerScan};
