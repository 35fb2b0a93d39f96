//! Rotation-invariant feature extraction for 3D point clouds.
//!
//! The pipeline samples keypoints by farthest point sampling, attaches a
//! globally weighted, sign-disambiguated local reference frame to each one,
//! summarises the whole cloud with up to eight octant anchors expressed in
//! that frame, and convolves the resulting point-anchor relations into
//! per-keypoint features. Everything downstream of the frames only sees
//! local coordinates, so the network output is invariant to rigid rotation
//! of the input up to floating point round-off.
//!
//! Module map:
//!
//! * [`pcio`]: point cloud files, synthetic shapes, datasets, rotation sampling.
//! * [`geometry`]: rotations, farthest point sampling, kNN, 3x3 symmetric eigensolver.
//! * [`lrf`]: weighted covariance frames and the repeatability benchmark.
//! * [`anchor`]: octant anchors and relation tensors.
//! * [`conv`]: the single-keypoint convolution with its analytic backward pass.
//! * [`network`]: multi-layer classifier built from [`conv`] layers and a dense head.
//! * [`learner`]: cross-entropy, Adam and the training/evaluation loops.

pub mod anchor;
pub mod conv;
pub mod error;
pub mod geometry;
pub mod learner;
pub mod lrf;
pub mod network;
pub mod pcio;
pub mod seed;

pub use error::{Error, Result};

/// 3-vector used throughout the crate.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3x3 matrix used throughout the crate.
pub type Mat3 = nalgebra::Matrix3<f64>;
