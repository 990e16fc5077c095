//! Online multi-camera 3D multi-object tracking and pose estimation.
//!
//! Per-camera 2D bounding boxes and keypoints are fused into 3D tracks
//! (position, velocity, ellipsoid shape, skeleton) by keeping a single
//! highest-weight association hypothesis per frame: one optimal 2D linear
//! assignment per camera followed by sequential per-camera UKF updates.

pub mod association;
pub mod detection;
pub mod error;
pub mod filtering;
pub mod geometry;
pub mod metrics;
pub mod simulator;
pub mod skeleton;
pub mod tracker;

pub use detection::{Detection, FrameDetections, Keypoint2D};
pub use error::{Error, Result};
pub use geometry::{BBox2D, CameraModel, Ellipsoid3D};
pub use tracker::{Estimate, Tracker, TrackerConfig};
