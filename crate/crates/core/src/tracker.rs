//! Online track management: prediction, per-camera association, sequential
//! multi-view updates, mean-shift birth from unassigned detections, and
//! termination of stale or duplicated tracks.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::association::{associate_all, AssignmentMap, GatingConfig};
use crate::detection::{Detection, FrameDetections};
use crate::error::{Error, Result};
use crate::filtering::{
    kalman_predict, log_gaussian_density, predict_measurement_ks, ukf_update_kp, ukf_update_ks, GaussianState, KeypointGaussian, KpMatrix, KpVector, KsMatrix,
    KsVector, MotionConfig, UtConfig,
};
use crate::geometry::{bbox_bottom_to_ground, iou3d, CameraModel};
use crate::skeleton::{standing_pose, KeypointConvention};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BirthConfig {
    /// Flat-kernel mean-shift bandwidth on the ground plane, meters.
    pub bandwidth: f64,
    /// Smallest cluster of unassigned detections that spawns a track.
    pub min_cluster_size: usize,
    /// Prior log half-lengths of a newborn.
    pub log_shape: [f64; 3],
    pub position_var: f64,
    pub velocity_var: f64,
    pub shape_var: f64,
    pub keypoint_position_var: f64,
    pub keypoint_velocity_var: f64,
    /// Also correct the kinematic/shape block of a newborn with the
    /// detections of its cluster, not only its keypoints.
    pub refine_kinematics: bool,
    /// When set, a newborn is discarded unless every detection of its
    /// cluster costs at most this many nats under the refined state.
    pub member_max_cost: Option<f64>,
}

impl Default for BirthConfig {
    fn default() -> Self {
        Self {
            bandwidth: 0.5,
            min_cluster_size: 1,
            log_shape: [0.3_f64.ln(), 0.3_f64.ln(), 0.9_f64.ln()],
            position_var: 1.0,
            velocity_var: 1.0,
            shape_var: 0.01,
            keypoint_position_var: 0.25,
            keypoint_velocity_var: 1.0,
            refine_kinematics: true,
            member_max_cost: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TerminationConfig {
    /// A tentative track is dropped once its consecutive misses exceed this.
    pub max_misses: u32,
    /// 3D IoU above which two tracks are considered duplicates.
    pub duplicate_iou: f64,
}

impl Default for TerminationConfig {
    fn default() -> Self {
        Self { max_misses: 30, duplicate_iou: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub gating: GatingConfig,
    pub motion: MotionConfig,
    pub ut: UtConfig,
    pub birth: BirthConfig,
    pub termination: TerminationConfig,
    pub keypoints: KeypointConvention,
    /// Detections below this confidence are ignored.
    pub confidence_floor: f64,
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        self.gating.validate()?;
        self.motion.validate()?;
        self.ut.validate(9)?;
        self.ut.validate(6)?;
        let b = &self.birth;
        if !(b.bandwidth > 0.0) {
            return Err(Error::InvalidConfig("birth bandwidth must be positive".into()));
        }
        if b.member_max_cost.is_some_and(|c| c.is_nan()) {
            return Err(Error::InvalidConfig("member cost limit must be a number".into()));
        }
        if b.min_cluster_size == 0 {
            return Err(Error::InvalidConfig("min cluster size must be at least 1".into()));
        }
        let vars = [b.position_var, b.velocity_var, b.shape_var, b.keypoint_position_var, b.keypoint_velocity_var];
        if vars.iter().any(|v| !(*v > 0.0)) || b.log_shape.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("birth prior must be finite with positive variances".into()));
        }
        if !(self.termination.duplicate_iou > 0.0 && self.termination.duplicate_iou <= 1.0) {
            return Err(Error::InvalidConfig("duplicate IoU threshold must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackStatus {
    /// Born this frame.
    New,
    /// Received at least one detection this frame.
    Active,
    /// Missed on every camera this frame.
    Tentative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub state: GaussianState,
    pub status: TrackStatus,
    pub consecutive_misses: u32,
    pub birth_frame: u64,
    pub last_update_frame: u64,
}

impl Track {
    pub fn lifespan(&self, frame: u64) -> u64 {
        frame.saturating_sub(self.birth_frame)
    }
}

/// Reported 3D state of a confirmed track.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub id: u64,
    pub position: Vector3<f64>,
    pub half_lengths: Vector3<f64>,
    pub keypoints: Vec<Vector3<f64>>,
}

impl Estimate {
    fn of(track: &Track) -> Self {
        Self {
            id: track.id,
            position: track.state.position(),
            half_lengths: track.state.ellipsoid().half_lengths(),
            keypoints: track.state.keypoint_positions(),
        }
    }
}

/// Outcome of flat-kernel mean shift on a 2D point set.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centroids: Vec<Vector2<f64>>,
    /// Cluster index of every input point.
    pub labels: Vec<usize>,
}

impl Clustering {
    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.labels.iter().enumerate().filter(move |(_, l)| **l == cluster).map(|(i, _)| i)
    }
}

const MEAN_SHIFT_TOL: f64 = 1e-4;
const MEAN_SHIFT_MAX_ITERS: usize = 100;

/// Flat-kernel mean shift seeded at every point. Converged modes closer than
/// half the bandwidth are merged, keeping the one with more support; each
/// point is labeled with its nearest surviving mode.
pub fn mean_shift(points: &[Vector2<f64>], bandwidth: f64) -> Clustering {
    let shift = |start: Vector2<f64>| {
        let mut m = start;
        for _ in 0..MEAN_SHIFT_MAX_ITERS {
            let (sum, count) = points
                .iter()
                .filter(|p| (*p - m).norm() <= bandwidth)
                .fold((Vector2::zeros(), 0usize), |(s, c), p| (s + p, c + 1));
            if count == 0 {
                break;
            }
            let next = sum / count as f64;
            let moved = (next - m).norm();
            m = next;
            if moved < MEAN_SHIFT_TOL {
                break;
            }
        }
        m
    };
    let modes: Vec<Vector2<f64>> = points.iter().map(|p| shift(*p)).collect();
    let support: Vec<usize> =
        modes.iter().map(|m| points.iter().filter(|p| (*p - m).norm() <= bandwidth).count()).collect();

    let mut order: Vec<usize> = (0..modes.len()).collect();
    order.sort_by(|a, b| support[*b].cmp(&support[*a]).then(a.cmp(b)));
    let mut kept: Vec<Vector2<f64>> = Vec::new();
    for i in order {
        if kept.iter().all(|k| (k - modes[i]).norm() >= bandwidth / 2.0) {
            kept.push(modes[i]);
        }
    }

    let nearest = |p: &Vector2<f64>| {
        let mut best = 0;
        for (k, c) in kept.iter().enumerate() {
            if (p - c).norm() < (p - kept[best]).norm() {
                best = k;
            }
        }
        best
    };
    let raw: Vec<usize> = points.iter().map(nearest).collect();
    // drop modes that ended up with no members and compact the labels
    let mut remap = vec![usize::MAX; kept.len()];
    let mut centroids = Vec::new();
    for &r in &raw {
        if remap[r] == usize::MAX {
            remap[r] = centroids.len();
            centroids.push(kept[r]);
        }
    }
    Clustering { centroids, labels: raw.iter().map(|r| remap[*r]).collect() }
}

/// The online tracker: configuration, live tracks and the id counter.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, tracks: Vec::new(), next_id: 1 })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Processes one frame. `cameras` may be given in any order; updates are
    /// applied in ascending camera id.
    pub fn step(&mut self, detections: &FrameDetections, cameras: &[CameraModel], frame: u64) -> Vec<Estimate> {
        let cfg = self.config;
        let mut cams: Vec<&CameraModel> = cameras.iter().collect();
        cams.sort_by_key(|c| c.id);
        let sorted_cams: Vec<CameraModel> = cams.iter().map(|c| (*c).clone()).collect();

        let detections: FrameDetections = detections
            .iter()
            .map(|(id, dets)| (*id, dets.iter().filter(|d| d.confidence >= cfg.confidence_floor).cloned().collect()))
            .collect();

        for track in &mut self.tracks {
            track.state = kalman_predict(&track.state, &cfg.motion);
        }

        let states: Vec<&GaussianState> = self.tracks.iter().map(|t| &t.state).collect();
        let assignments = associate_all(&states, &detections, &sorted_cams, &cfg.gating, &cfg.ut);

        for (i, track) in self.tracks.iter_mut().enumerate() {
            let mut hit = false;
            for cam in &sorted_cams {
                let Some(Some(j)) = assignments.get(&cam.id).map(|a| a[i]) else { continue };
                let det = &detections[&cam.id][j];
                track.state = ukf_update_ks(&det.bbox, &track.state, cam, &cfg.ut).1;
                track.state = ukf_update_kp(&det.keypoints, &track.state, cam, &cfg.ut);
                hit = true;
            }
            if hit {
                track.status = TrackStatus::Active;
                track.consecutive_misses = 0;
                track.last_update_frame = frame;
            } else {
                track.status = TrackStatus::Tentative;
                track.consecutive_misses += 1;
            }
        }

        let leftovers = unassigned(&detections, &assignments);
        self.birth(&leftovers, &sorted_cams, frame);
        self.terminate(frame);

        self.estimates()
    }

    /// Estimates of new and active tracks, in pool order.
    pub fn estimates(&self) -> Vec<Estimate> {
        self.tracks.iter().filter(|t| t.status != TrackStatus::Tentative).map(Estimate::of).collect()
    }

    fn birth(&mut self, leftovers: &[&Detection], cams: &[CameraModel], frame: u64) {
        let b = self.config.birth;
        let mut grounded: Vec<(&Detection, &CameraModel, Vector2<f64>)> = Vec::new();
        for det in leftovers {
            let Some(cam) = cams.iter().find(|c| c.id == det.camera_id) else { continue };
            if let Ok(g) = bbox_bottom_to_ground(&det.bbox, cam) {
                grounded.push((det, cam, g));
            }
        }
        if grounded.is_empty() {
            return;
        }
        let points: Vec<Vector2<f64>> = grounded.iter().map(|(_, _, g)| *g).collect();
        let clustering = mean_shift(&points, b.bandwidth);

        for (k, centroid) in clustering.centroids.iter().enumerate() {
            let members: Vec<usize> = clustering.members(k).collect();
            if members.len() < b.min_cluster_size {
                continue;
            }
            let mut state = self.birth_state(centroid);
            // members are already in ascending camera order
            for &m in &members {
                let (det, cam, _) = grounded[m];
                if b.refine_kinematics {
                    state = ukf_update_ks(&det.bbox, &state, cam, &self.config.ut).1;
                }
                state = ukf_update_kp(&det.keypoints, &state, cam, &self.config.ut);
            }
            if let Some(max_cost) = b.member_max_cost {
                if !members.iter().all(|&m| self.member_cost(&state, grounded[m].0, grounded[m].1) <= max_cost) {
                    continue;
                }
            }
            self.tracks.push(Track {
                id: self.next_id,
                state,
                status: TrackStatus::New,
                consecutive_misses: 0,
                birth_frame: frame,
                last_update_frame: frame,
            });
            self.next_id += 1;
        }
    }

    fn member_cost(&self, state: &GaussianState, det: &Detection, cam: &CameraModel) -> f64 {
        predict_measurement_ks(state, cam, &self.config.ut)
            .ok()
            .and_then(|p| log_gaussian_density(det.bbox.as_vector(), &p.mean, &p.innovation_cov))
            .map_or(f64::INFINITY, |log_q| -log_q)
    }

    fn birth_state(&self, centroid: &Vector2<f64>) -> GaussianState {
        let b = &self.config.birth;
        let log_shape = Vector3::from(b.log_shape);
        let half = log_shape.map(f64::exp);
        let mut mean = KsVector::zeros();
        mean.fixed_rows_mut::<3>(0).copy_from(&Vector3::new(centroid.x, centroid.y, half.z));
        mean.fixed_rows_mut::<3>(6).copy_from(&log_shape);
        let mut diag = KsVector::zeros();
        for i in 0..3 {
            diag[i] = b.position_var;
            diag[i + 3] = b.velocity_var;
            diag[i + 6] = b.shape_var;
        }
        let kp_cov = KpMatrix::from_diagonal(&KpVector::new(
            b.keypoint_position_var,
            b.keypoint_position_var,
            b.keypoint_position_var,
            b.keypoint_velocity_var,
            b.keypoint_velocity_var,
            b.keypoint_velocity_var,
        ));
        let keypoints = standing_pose(self.config.keypoints, *centroid, &half)
            .into_iter()
            .map(|p| KeypointGaussian { mean: KpVector::new(p.x, p.y, p.z, 0.0, 0.0, 0.0), cov: kp_cov })
            .collect();
        GaussianState { mean, cov: KsMatrix::from_diagonal(&diag), keypoints }
    }

    fn terminate(&mut self, frame: u64) {
        let max_misses = self.config.termination.max_misses;
        self.tracks
            .retain(|t| !(t.status == TrackStatus::Tentative && t.consecutive_misses > max_misses));

        // every track overlapping a longer-lived (or equally old, lower id) track goes
        let boxes: Vec<_> = self.tracks.iter().map(|t| t.state.ellipsoid().aabb()).collect();
        let outranks = |a: &Track, b: &Track| {
            let (la, lb) = (a.lifespan(frame), b.lifespan(frame));
            la > lb || (la == lb && a.id < b.id)
        };
        let threshold = self.config.termination.duplicate_iou;
        let doomed: Vec<bool> = (0..self.tracks.len())
            .map(|i| {
                (0..self.tracks.len()).any(|j| {
                    j != i
                        && outranks(&self.tracks[j], &self.tracks[i])
                        && iou3d(&boxes[i], &boxes[j]).is_ok_and(|v| v > threshold)
                })
            })
            .collect();
        let mut flags = doomed.into_iter();
        self.tracks.retain(|_| !flags.next().unwrap_or(false));
    }
}

fn unassigned<'a>(detections: &'a FrameDetections, assignments: &AssignmentMap) -> Vec<&'a Detection> {
    let mut out = Vec::new();
    for (cam_id, dets) in detections {
        let taken: Vec<usize> = assignments.get(cam_id).map(|a| a.iter().flatten().copied().collect()).unwrap_or_default();
        out.extend(dets.iter().enumerate().filter(|(j, _)| !taken.contains(j)).map(|(_, d)| d));
    }
    out
}
