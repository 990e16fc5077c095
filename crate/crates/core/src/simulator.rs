//! Synthetic multi-camera scenarios: waypoint-following actors with walking
//! skeletons, rendered into noisy, incomplete and cluttered per-camera
//! detections, plus camera on/off schedules and detection deletion.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Vector2, Vector3, Vector4};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::detection::{Detection, FrameDetections, Keypoint2D};
use crate::error::{Error, Result};
use crate::geometry::{project_ellipsoid_to_bbox, project_keypoint, BBox2D, CameraModel, CameraRecord, Ellipsoid3D};
use crate::metrics::{ObjectState, TrajectorySet};
use crate::skeleton::{pose, Gait, KeypointConvention};

/// Fastest walking speed a scenario may ask for, m/s.
pub const MAX_SPEED: f64 = 3.0;
const SPEED_SLACK: f64 = 1e-9;
/// Fallback clutter size in pixels when a camera sees no true detection.
const CLUTTER_PRIOR_SIZE: (f64, f64) = (80.0, 200.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub frame: u64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub id: u64,
    #[serde(default)]
    pub spawn: u64,
    /// First frame the actor is gone; `None` keeps it to the end.
    #[serde(default)]
    pub despawn: Option<u64>,
    pub waypoints: Vec<Waypoint>,
    #[serde(default = "default_half_lengths")]
    pub half_lengths: [f64; 3],
    /// Foot swing amplitude in meters.
    #[serde(default = "default_gait_amplitude")]
    pub gait_amplitude: f64,
    /// Distance covered by one full gait cycle, meters.
    #[serde(default = "default_stride")]
    pub stride_length: f64,
    /// Half-open frame intervals during which no camera detects the actor.
    #[serde(default)]
    pub occluded: Vec<[u64; 2]>,
}

fn default_half_lengths() -> [f64; 3] {
    [0.3, 0.3, 0.9]
}

fn default_gait_amplitude() -> f64 {
    0.2
}

fn default_stride() -> f64 {
    1.4
}

fn default_dt() -> f64 {
    1.0 / 30.0
}

fn default_detection_probability() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub cameras: Vec<CameraRecord>,
    /// Per camera id, half-open [on, off) frame intervals. Cameras without an
    /// entry are always on.
    #[serde(default)]
    pub schedule: BTreeMap<u32, Vec<[u64; 2]>>,
    pub actors: Vec<Actor>,
    pub frames: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Pixel noise std on every bounding box edge.
    #[serde(default)]
    pub bbox_sigma: f64,
    /// Pixel noise std on every keypoint coordinate.
    #[serde(default)]
    pub keypoint_sigma: f64,
    #[serde(default = "default_detection_probability")]
    pub detection_probability: f64,
    /// Per-camera overrides of `detection_probability`.
    #[serde(default)]
    pub camera_detection_probability: BTreeMap<u32, f64>,
    /// Mean clutter detections per camera per frame.
    #[serde(default)]
    pub clutter_rate: f64,
    #[serde(default)]
    pub keypoints: KeypointConvention,
    #[serde(default)]
    pub seed: u64,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidScenario(msg.into())
}

fn check_intervals(intervals: &[[u64; 2]], frames: u64, what: &str) -> Result<()> {
    for [a, b] in intervals {
        if a >= b || *b > frames {
            return Err(invalid(format!("{what} interval [{a}, {b}) must be non-empty and within [0, {frames}]")));
        }
    }
    Ok(())
}

fn within(intervals: &[[u64; 2]], t: u64) -> bool {
    intervals.iter().any(|[a, b]| *a <= t && t < *b)
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(invalid("a scenario needs at least one frame"));
        }
        if !(self.dt > 0.0) {
            return Err(invalid("dt must be positive"));
        }
        let probabilities = std::iter::once(&self.detection_probability).chain(self.camera_detection_probability.values());
        for p in probabilities {
            if !(0.0..=1.0).contains(p) {
                return Err(invalid("detection probabilities must lie in [0, 1]"));
            }
        }
        if !(self.clutter_rate >= 0.0 && self.clutter_rate.is_finite()) {
            return Err(invalid("clutter rate must be non-negative"));
        }
        if !(self.bbox_sigma >= 0.0 && self.keypoint_sigma >= 0.0) {
            return Err(invalid("noise levels must be non-negative"));
        }
        let ids: BTreeSet<u32> = self.cameras.iter().map(|c| c.id).collect();
        if ids.len() != self.cameras.len() {
            return Err(invalid("camera ids must be unique"));
        }
        for (cam, intervals) in &self.schedule {
            if !ids.contains(cam) {
                return Err(invalid(format!("schedule references unknown camera {cam}")));
            }
            check_intervals(intervals, self.frames, "schedule")?;
        }
        for cam in self.camera_detection_probability.keys() {
            if !ids.contains(cam) {
                return Err(invalid(format!("detection probability given for unknown camera {cam}")));
            }
        }
        let mut actor_ids = BTreeSet::new();
        for a in &self.actors {
            if !actor_ids.insert(a.id) {
                return Err(invalid(format!("duplicate actor id {}", a.id)));
            }
            a.validate(self.frames, self.dt)?;
        }
        Ok(())
    }

    /// Cameras active at frame `t`.
    pub fn active_cameras(&self, t: u64) -> BTreeSet<u32> {
        self.cameras
            .iter()
            .filter(|c| self.schedule.get(&c.id).is_none_or(|iv| within(iv, t)))
            .map(|c| c.id)
            .collect()
    }

    fn detection_probability_for(&self, cam: u32) -> f64 {
        self.camera_detection_probability.get(&cam).copied().unwrap_or(self.detection_probability)
    }
}

impl Actor {
    fn validate(&self, frames: u64, dt: f64) -> Result<()> {
        let end = self.despawn.unwrap_or(frames);
        if self.spawn >= end || end > frames {
            return Err(invalid(format!("actor {} must live within [0, {frames}]", self.id)));
        }
        if self.waypoints.is_empty() {
            return Err(invalid(format!("actor {} has no waypoints", self.id)));
        }
        if self.half_lengths.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(invalid(format!("actor {} needs positive half-lengths", self.id)));
        }
        if !(self.stride_length > 0.0 && self.gait_amplitude >= 0.0) {
            return Err(invalid(format!("actor {} has invalid gait parameters", self.id)));
        }
        check_intervals(&self.occluded, frames, "occlusion")?;
        for pair in self.waypoints.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let dist = (b.x - a.x).hypot(b.y - a.y);
            if b.frame < a.frame || (b.frame == a.frame && dist > 0.0) {
                return Err(invalid(format!("actor {} waypoints must be ordered by frame", self.id)));
            }
            if b.frame > a.frame && dist / ((b.frame - a.frame) as f64 * dt) > MAX_SPEED + SPEED_SLACK {
                return Err(invalid(format!(
                    "actor {} moves faster than {MAX_SPEED} m/s between frames {} and {}",
                    self.id, a.frame, b.frame
                )));
            }
        }
        Ok(())
    }

    fn alive(&self, t: u64, frames: u64) -> bool {
        self.spawn <= t && t < self.despawn.unwrap_or(frames)
    }

    /// Ground position, velocity direction (if moving) and path length travelled at frame `t`.
    fn kinematics(&self, t: u64) -> (Vector2<f64>, Option<Vector2<f64>>, f64) {
        let mut travelled = 0.0;
        let mut heading = None;
        let first = self.waypoints[0];
        if t <= first.frame {
            return (Vector2::new(first.x, first.y), self.first_direction(), 0.0);
        }
        for pair in self.waypoints.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let pa = Vector2::new(a.x, a.y);
            let pb = Vector2::new(b.x, b.y);
            let seg = pb - pa;
            if seg.norm() > 0.0 {
                heading = Some(seg.normalize());
            }
            if t < b.frame {
                let s = (t - a.frame) as f64 / (b.frame - a.frame) as f64;
                return (pa + seg * s, heading, travelled + seg.norm() * s);
            }
            travelled += seg.norm();
        }
        let last = self.waypoints[self.waypoints.len() - 1];
        (Vector2::new(last.x, last.y), heading, travelled)
    }

    fn first_direction(&self) -> Option<Vector2<f64>> {
        self.waypoints.windows(2).find_map(|p| {
            let d = Vector2::new(p[1].x - p[0].x, p[1].y - p[0].y);
            (d.norm() > 0.0).then(|| d.normalize())
        })
    }

    fn state(&self, t: u64, convention: KeypointConvention) -> ObjectState {
        let half = Vector3::from(self.half_lengths);
        let (ground, direction, travelled) = self.kinematics(t);
        // heading measured from +y towards −x
        let heading = direction.map_or(0.0, |d| (-d.x).atan2(d.y));
        let gait = Gait {
            phase: std::f64::consts::TAU * travelled / self.stride_length,
            amplitude: self.gait_amplitude,
        };
        ObjectState {
            position: Vector3::new(ground.x, ground.y, half.z),
            half_lengths: half,
            keypoints: pose(convention, ground, &half, heading, gait),
        }
    }
}

/// Ground truth of every alive actor at every frame.
pub fn generate_ground_truth(scenario: &Scenario) -> Result<TrajectorySet> {
    scenario.validate()?;
    let mut truth = TrajectorySet::new();
    for t in 0..scenario.frames {
        for actor in scenario.actors.iter().filter(|a| a.alive(t, scenario.frames)) {
            truth.insert(t, actor.id, actor.state(t, scenario.keypoints));
        }
    }
    Ok(truth)
}

/// Independent stream for one (seed, frame, purpose) triple so that frames
/// can be rendered in any order.
fn frame_rng(seed: u64, frame: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(frame);
    rng
}

const RENDER_STREAM: u64 = 1;
const DELETION_STREAM: u64 = 2;

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).map_or(0.0, |n| n.sample(rng))
}

/// Prepared scenario: validated cameras plus ground truth.
#[derive(Debug, Clone)]
pub struct Simulator {
    scenario: Scenario,
    cameras: Vec<CameraModel>,
    truth: TrajectorySet,
}

impl Simulator {
    pub fn new(scenario: Scenario) -> Result<Self> {
        let truth = generate_ground_truth(&scenario)?;
        let mut cameras = scenario.cameras.iter().map(CameraModel::try_from).collect::<Result<Vec<_>>>()?;
        cameras.sort_by_key(|c| c.id);
        Ok(Self { scenario, cameras, truth })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn ground_truth(&self) -> &TrajectorySet {
        &self.truth
    }

    pub fn frames(&self) -> u64 {
        self.scenario.frames
    }

    /// All cameras with their `active` flag set from the schedule at frame `t`.
    pub fn cameras_at(&self, t: u64) -> Vec<CameraModel> {
        let active = self.scenario.active_cameras(t);
        self.cameras
            .iter()
            .map(|c| {
                let mut c = c.clone();
                c.active = active.contains(&c.id);
                c
            })
            .collect()
    }

    /// Detections of frame `t`; active cameras only.
    pub fn render(&self, t: u64) -> FrameDetections {
        let s = &self.scenario;
        let mut rng = frame_rng(s.seed, t, RENDER_STREAM);
        let empty = Default::default();
        let objects = self.truth.frame(t).unwrap_or(&empty);
        let visible: Vec<(&u64, &ObjectState)> = objects
            .iter()
            .filter(|(id, _)| s.actors.iter().find(|a| a.id == **id).is_some_and(|a| !within(&a.occluded, t)))
            .collect();
        let mut out = FrameDetections::new();
        for cam in self.cameras_at(t).iter().filter(|c| c.active) {
            let p_d = s.detection_probability_for(cam.id);
            let mut dets = Vec::new();
            for (_, obj) in &visible {
                let detected = rng.random_bool(p_d);
                let Some(det) = self.render_object(obj, cam, &mut rng) else { continue };
                if detected {
                    dets.push(det);
                }
            }
            let sizes: Vec<(f64, f64)> = dets.iter().map(|d| (d.bbox.width(), d.bbox.height())).collect();
            let clutter = if s.clutter_rate > 0.0 {
                Poisson::new(s.clutter_rate).map_or(0, |p| p.sample(&mut rng) as usize)
            } else {
                0
            };
            for _ in 0..clutter {
                dets.push(clutter_detection(cam, &sizes, s.keypoints.count(), &mut rng));
            }
            dets.shuffle(&mut rng);
            out.insert(cam.id, dets);
        }
        out
    }

    fn render_object(&self, obj: &ObjectState, cam: &CameraModel, rng: &mut ChaCha8Rng) -> Option<Detection> {
        let s = &self.scenario;
        let e = Ellipsoid3D::new(obj.position, obj.half_lengths.map(f64::ln));
        let exact = project_ellipsoid_to_bbox(&e, cam).ok()?;
        if !cam.contains_pixel(&exact.center()) {
            return None;
        }
        let left = exact.left() + gaussian(rng, s.bbox_sigma);
        let top = exact.top() + gaussian(rng, s.bbox_sigma);
        let right = exact.right() + gaussian(rng, s.bbox_sigma);
        let bottom = exact.bottom() + gaussian(rng, s.bbox_sigma);
        let bbox = if s.bbox_sigma == 0.0 {
            exact
        } else {
            BBox2D::from_pixels(left, top, (right - left).max(1.0), (bottom - top).max(1.0))
        };
        let keypoints = obj
            .keypoints
            .iter()
            .map(|p| {
                let noise = Vector2::new(gaussian(rng, s.keypoint_sigma), gaussian(rng, s.keypoint_sigma));
                match project_keypoint(p, cam) {
                    Ok(px) if cam.contains_pixel(&px) => {
                        let px = px + noise;
                        Keypoint2D::visible(px.x, px.y)
                    }
                    _ => Keypoint2D::missing(),
                }
            })
            .collect();
        Some(Detection { camera_id: cam.id, bbox, confidence: 0.9 + 0.1 * rng.random::<f64>(), keypoints })
    }
}

fn clutter_detection(cam: &CameraModel, sizes: &[(f64, f64)], n_keypoints: usize, rng: &mut ChaCha8Rng) -> Detection {
    let (w_img, h_img) = cam.image_size;
    let (w, h) = if sizes.is_empty() { CLUTTER_PRIOR_SIZE } else { sizes[rng.random_range(0..sizes.len())] };
    let jitter = (gaussian(rng, 0.1)).exp();
    let (w, h) = ((w * jitter).min(w_img), (h * jitter).min(h_img));
    let left = rng.random_range(0.0..=(w_img - w));
    let top = rng.random_range(0.0..=(h_img - h));
    let keypoints = (0..n_keypoints)
        .map(|_| Keypoint2D::visible(left + w * rng.random::<f64>(), top + h * rng.random::<f64>()))
        .collect();
    Detection {
        camera_id: cam.id,
        bbox: BBox2D::from_pixels(left, top, w, h),
        confidence: 0.3 + 0.7 * rng.random::<f64>(),
        keypoints,
    }
}

/// Removes every detection independently with probability `rate`.
pub fn apply_deletion(detections: &FrameDetections, rate: f64, seed: u64, frame: u64) -> FrameDetections {
    let mut rng = frame_rng(seed, frame, DELETION_STREAM);
    let rate = rate.clamp(0.0, 1.0);
    detections
        .iter()
        .map(|(cam, dets)| (*cam, dets.iter().filter(|_| !rng.random_bool(rate)).cloned().collect()))
        .collect()
}

/// Geometry of the square corner rig.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigSpec {
    /// Side of the square floor area, meters.
    pub side: f64,
    pub height: f64,
    /// Height of the point all cameras look at.
    pub target_height: f64,
    pub focal_px: f64,
    pub image_size: (f64, f64),
    /// Filter measurement noise variances for boxes (left, top, log w, log h).
    pub bbox_noise: [f64; 4],
    /// Filter measurement noise variances for keypoints (x, y).
    pub keypoint_noise: [f64; 2],
}

impl Default for RigSpec {
    fn default() -> Self {
        Self {
            side: 10.0,
            height: 2.5,
            target_height: 0.9,
            focal_px: 960.0,
            image_size: (1920.0, 1080.0),
            bbox_noise: [64.0, 64.0, 0.01, 0.01],
            keypoint_noise: [9.0, 9.0],
        }
    }
}

/// Four cameras on the corners of the floor square, ids counter-clockwise
/// from (−side/2, −side/2), all looking at the center.
pub fn corner_rig(spec: &RigSpec) -> Result<Vec<CameraRecord>> {
    let h = spec.side / 2.0;
    [(-h, -h), (h, -h), (h, h), (-h, h)]
        .iter()
        .enumerate()
        .map(|(i, (x, y))| {
            CameraModel::look_at(
                i as u32,
                Vector3::new(*x, *y, spec.height),
                Vector3::new(0.0, 0.0, spec.target_height),
                spec.focal_px,
                spec.image_size,
                Vector4::from(spec.bbox_noise),
                Vector2::from(spec.keypoint_noise),
            )
            .map(|c| CameraRecord::from(&c))
        })
        .collect()
}
