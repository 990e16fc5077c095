use std::collections::BTreeMap;

use nalgebra::Vector2;

use crate::geometry::BBox2D;

/// One 2D joint observation; `visible = false` marks a missed keypoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint2D {
    pub position: Vector2<f64>,
    pub visible: bool,
}

impl Keypoint2D {
    pub fn visible(x: f64, y: f64) -> Self {
        Self { position: Vector2::new(x, y), visible: true }
    }

    pub fn missing() -> Self {
        Self { position: Vector2::zeros(), visible: false }
    }
}

/// A per-camera bounding box with its keypoint list.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub camera_id: u32,
    pub bbox: BBox2D,
    pub confidence: f64,
    pub keypoints: Vec<Keypoint2D>,
}

/// Detections of one frame keyed by camera id.
pub type FrameDetections = BTreeMap<u32, Vec<Detection>>;

/// Total number of detections across cameras.
pub fn count_detections(frame: &FrameDetections) -> usize {
    frame.values().map(Vec::len).sum()
}
