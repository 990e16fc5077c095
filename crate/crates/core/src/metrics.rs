//! Tracking and pose evaluation: CLEAR-MOT, IDF1, OSPA(2), MPJPE and PCK.
//!
//! "Euclidean" distances between objects are measured on the ground plane
//! (x, y of the box center); the GIoU variant uses the axis-aligned 3D boxes.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::association::{solve_assignment, solve_with_miss_cost, CostMatrix};
use crate::error::{Error, Result};
use crate::geometry::{giou3d_distance, Aabb3};
use crate::tracker::Estimate;

/// State of one object at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectState {
    pub position: Vector3<f64>,
    pub half_lengths: Vector3<f64>,
    pub keypoints: Vec<Vector3<f64>>,
}

impl ObjectState {
    pub fn aabb(&self) -> Aabb3 {
        Aabb3::new(self.position - self.half_lengths, self.position + self.half_lengths)
    }
}

impl From<&Estimate> for ObjectState {
    fn from(e: &Estimate) -> Self {
        Self { position: e.position, half_lengths: e.half_lengths, keypoints: e.keypoints.clone() }
    }
}

/// Objects of one frame keyed by id.
pub type FrameObjects = BTreeMap<u64, ObjectState>;

/// Trajectories stored frame-major; at most one state per (id, frame).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectorySet {
    frames: BTreeMap<u64, FrameObjects>,
}

impl TrajectorySet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a state, replacing any previous state of the same id at that frame.
    pub fn insert(&mut self, frame: u64, id: u64, state: ObjectState) {
        self.frames.entry(frame).or_default().insert(id, state);
    }

    pub fn extend_estimates(&mut self, frame: u64, estimates: &[Estimate]) {
        let objects = self.frames.entry(frame).or_default();
        for e in estimates {
            objects.insert(e.id, e.into());
        }
    }

    pub fn frame(&self, frame: u64) -> Option<&FrameObjects> {
        self.frames.get(&frame)
    }

    pub fn frames(&self) -> impl Iterator<Item = (u64, &FrameObjects)> {
        self.frames.iter().map(|(f, o)| (*f, o))
    }

    pub fn frame_numbers(&self) -> impl Iterator<Item = u64> + '_ {
        self.frames.keys().copied()
    }

    /// Total number of (id, frame) states.
    pub fn len(&self) -> usize {
        self.frames.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.frames.values().flat_map(|o| o.keys().copied()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Same trajectories with every coordinate shifted by `offset`.
    pub fn translated(&self, offset: &Vector3<f64>) -> Self {
        let mut out = self.clone();
        for objects in out.frames.values_mut() {
            for s in objects.values_mut() {
                s.position += offset;
                for k in &mut s.keypoints {
                    *k += offset;
                }
            }
        }
        out
    }

    /// Same trajectories with ids passed through `relabel`.
    pub fn relabeled(&self, relabel: impl Fn(u64) -> u64) -> Self {
        let mut out = Self::new();
        for (f, objects) in self.frames() {
            for (id, s) in objects {
                out.insert(f, relabel(*id), s.clone());
            }
        }
        out
    }

    fn union_frames(&self, other: &Self) -> Vec<u64> {
        let mut frames: Vec<u64> = self.frames.keys().chain(other.frames.keys()).copied().collect();
        frames.sort_unstable();
        frames.dedup();
        frames
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseDistance {
    #[default]
    Euclidean,
    Giou,
}

impl BaseDistance {
    pub fn between(self, a: &ObjectState, b: &ObjectState) -> f64 {
        match self {
            Self::Euclidean => (a.position.xy() - b.position.xy()).norm(),
            // degenerate boxes are as far apart as GIoU allows
            Self::Giou => giou3d_distance(&a.aabb(), &b.aabb()).unwrap_or(2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub distance: BaseDistance,
    /// Match threshold for CLEAR-MOT and IDF1; `None` picks 1 m for
    /// Euclidean and 0.5 for GIoU.
    pub match_threshold: Option<f64>,
    pub ospa_cutoff: f64,
    pub ospa_order: f64,
    /// Trailing OSPA(2) window in frames; `None` grows from the first frame.
    pub ospa_window: Option<u64>,
    /// Ground-plane radius for pairing skeletons, meters.
    pub person_match_radius: f64,
    /// PCK joint distance threshold, meters.
    pub pck_threshold: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            distance: BaseDistance::Euclidean,
            match_threshold: None,
            ospa_cutoff: 1.0,
            ospa_order: 1.0,
            ospa_window: None,
            person_match_radius: 1.0,
            pck_threshold: 0.15,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ospa_cutoff > 0.0) {
            return Err(Error::InvalidConfig("OSPA cutoff must be positive".into()));
        }
        if !(self.ospa_order >= 1.0) {
            return Err(Error::InvalidConfig("OSPA order must be at least 1".into()));
        }
        if self.ospa_window == Some(0) {
            return Err(Error::InvalidConfig("OSPA window must span at least one frame".into()));
        }
        if !(self.person_match_radius > 0.0 && self.pck_threshold > 0.0) {
            return Err(Error::InvalidConfig("matching radii must be positive".into()));
        }
        if self.match_threshold.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::InvalidConfig("match threshold must be positive".into()));
        }
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        self.match_threshold.unwrap_or(match self.distance {
            BaseDistance::Euclidean => 1.0,
            BaseDistance::Giou => 0.5,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClearMot {
    pub false_positives: usize,
    pub false_negatives: usize,
    pub id_switches: usize,
    pub matches: usize,
    pub ground_truth: usize,
    pub mota: f64,
    /// Root mean square base distance over matched pairs (0 without matches).
    pub rmse: f64,
}

/// Optimal matching of two object maps under a distance threshold.
fn match_frame(
    gt: &[(u64, &ObjectState)],
    est: &[(u64, &ObjectState)],
    dist: impl Fn(&ObjectState, &ObjectState) -> f64,
    threshold: f64,
) -> Vec<(usize, usize, f64)> {
    if gt.is_empty() || est.is_empty() {
        return Vec::new();
    }
    let mut c = CostMatrix::infeasible(gt.len(), est.len());
    for (i, (_, g)) in gt.iter().enumerate() {
        for (j, (_, e)) in est.iter().enumerate() {
            let d = dist(g, e);
            if d <= threshold {
                c.set(i, j, d);
            }
        }
    }
    solve_assignment(&c)
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (i, j, c.get(i, j))))
        .collect()
}

/// CLEAR-MOT counts. Matches from the previous frame are kept while still
/// under the threshold; the rest is assigned optimally. An id switch is
/// counted when a ground truth gets matched to a different estimate than the
/// last one it was matched to.
pub fn clearmot(gt: &TrajectorySet, est: &TrajectorySet, cfg: &MetricConfig) -> Result<ClearMot> {
    let total_gt = gt.len();
    if total_gt == 0 {
        return Err(Error::UndefinedMetric("MOTA is undefined without ground truth"));
    }
    let threshold = cfg.threshold();
    let empty = FrameObjects::new();
    let mut previous: BTreeMap<u64, u64> = BTreeMap::new();
    let mut last_match: BTreeMap<u64, u64> = BTreeMap::new();
    let (mut fp, mut fn_, mut ids, mut matches, mut sq) = (0, 0, 0, 0, 0.0);

    for frame in gt.union_frames(est) {
        let g_objs = gt.frame(frame).unwrap_or(&empty);
        let e_objs = est.frame(frame).unwrap_or(&empty);
        let mut current: BTreeMap<u64, u64> = BTreeMap::new();
        let mut dists = Vec::new();
        for (g_id, e_id) in &previous {
            if let (Some(g), Some(e)) = (g_objs.get(g_id), e_objs.get(e_id)) {
                let d = cfg.distance.between(g, e);
                if d <= threshold {
                    current.insert(*g_id, *e_id);
                    dists.push(d);
                }
            }
        }
        let taken: Vec<u64> = current.values().copied().collect();
        let free_gt: Vec<(u64, &ObjectState)> =
            g_objs.iter().filter(|(id, _)| !current.contains_key(id)).map(|(id, s)| (*id, s)).collect();
        let free_est: Vec<(u64, &ObjectState)> =
            e_objs.iter().filter(|(id, _)| !taken.contains(id)).map(|(id, s)| (*id, s)).collect();
        for (i, j, d) in match_frame(&free_gt, &free_est, |a, b| cfg.distance.between(a, b), threshold) {
            let (g_id, e_id) = (free_gt[i].0, free_est[j].0);
            if last_match.get(&g_id).is_some_and(|prev| *prev != e_id) {
                ids += 1;
            }
            current.insert(g_id, e_id);
            dists.push(d);
        }
        for (g_id, e_id) in &current {
            last_match.insert(*g_id, *e_id);
        }
        matches += current.len();
        fn_ += g_objs.len() - current.len();
        fp += e_objs.len() - current.len();
        sq += dists.iter().map(|d| d * d).sum::<f64>();
        previous = current;
    }

    Ok(ClearMot {
        false_positives: fp,
        false_negatives: fn_,
        id_switches: ids,
        matches,
        ground_truth: total_gt,
        mota: 1.0 - (fp + fn_ + ids) as f64 / total_gt as f64,
        rmse: if matches > 0 { (sq / matches as f64).sqrt() } else { 0.0 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdScores {
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
    pub idf1: f64,
}

/// Identity scores from the trajectory-level matching that maximizes IDTP.
pub fn idf1(gt: &TrajectorySet, est: &TrajectorySet, cfg: &MetricConfig) -> Result<IdScores> {
    if gt.is_empty() {
        return Err(Error::UndefinedMetric("IDF1 is undefined without ground truth"));
    }
    let threshold = cfg.threshold();
    let (gt_ids, est_ids) = (gt.ids(), est.ids());
    let mut overlap = vec![vec![0usize; est_ids.len()]; gt_ids.len()];
    for (frame, g_objs) in gt.frames() {
        let Some(e_objs) = est.frame(frame) else { continue };
        for (i, g_id) in gt_ids.iter().enumerate() {
            let Some(g) = g_objs.get(g_id) else { continue };
            for (j, e_id) in est_ids.iter().enumerate() {
                if let Some(e) = e_objs.get(e_id) {
                    if cfg.distance.between(g, e) <= threshold {
                        overlap[i][j] += 1;
                    }
                }
            }
        }
    }
    let mut c = CostMatrix::infeasible(gt_ids.len(), est_ids.len());
    for (i, row) in overlap.iter().enumerate() {
        for (j, n) in row.iter().enumerate() {
            if *n > 0 {
                c.set(i, j, -(*n as f64));
            }
        }
    }
    let idtp: usize = solve_with_miss_cost(&c, 0.0)
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| overlap[i][j]))
        .sum();
    let (n_gt, n_est) = (gt.len(), est.len());
    Ok(IdScores {
        idtp,
        idfp: n_est - idtp,
        idfn: n_gt - idtp,
        idf1: 2.0 * idtp as f64 / (n_gt + n_est) as f64,
    })
}

/// OSPA(2) series: entry k is the trajectory-set distance over the window
/// ending at the k-th frame of the union of both sets' frames.
pub fn ospa2(gt: &TrajectorySet, est: &TrajectorySet, cfg: &MetricConfig) -> Vec<(u64, f64)> {
    let frames = gt.union_frames(est);
    let mut series = Vec::with_capacity(frames.len());
    let mut cache = OspaAccumulator::new(gt, est, cfg);
    for (k, frame) in frames.iter().enumerate() {
        let value = match cfg.ospa_window {
            None => {
                cache.add(*frame);
                cache.distance()
            }
            Some(w) => {
                let start = frame.saturating_sub(w - 1);
                let mut acc = OspaAccumulator::new(gt, est, cfg);
                for f in frames[..=k].iter().filter(|f| **f >= start) {
                    acc.add(*f);
                }
                acc.distance()
            }
        };
        series.push((*frame, value));
    }
    series
}

/// Running per-pair sums of cut-off distances over a set of frames.
struct OspaAccumulator<'a> {
    gt: &'a TrajectorySet,
    est: &'a TrajectorySet,
    cfg: &'a MetricConfig,
    gt_ids: Vec<u64>,
    est_ids: Vec<u64>,
    /// Σ_t d_c(x(t), y(t))^p over frames where at least one of the pair exists.
    sums: Vec<Vec<f64>>,
    counts: Vec<Vec<usize>>,
    gt_seen: Vec<bool>,
    est_seen: Vec<bool>,
}

impl<'a> OspaAccumulator<'a> {
    fn new(gt: &'a TrajectorySet, est: &'a TrajectorySet, cfg: &'a MetricConfig) -> Self {
        let (gt_ids, est_ids) = (gt.ids(), est.ids());
        let (n, m) = (gt_ids.len(), est_ids.len());
        Self {
            gt,
            est,
            cfg,
            gt_ids,
            est_ids,
            sums: vec![vec![0.0; m]; n],
            counts: vec![vec![0; m]; n],
            gt_seen: vec![false; n],
            est_seen: vec![false; m],
        }
    }

    fn add(&mut self, frame: u64) {
        let empty = FrameObjects::new();
        let g_objs = self.gt.frame(frame).unwrap_or(&empty);
        let e_objs = self.est.frame(frame).unwrap_or(&empty);
        let (c, p) = (self.cfg.ospa_cutoff, self.cfg.ospa_order);
        let g: Vec<Option<&ObjectState>> = self.gt_ids.iter().map(|id| g_objs.get(id)).collect();
        let e: Vec<Option<&ObjectState>> = self.est_ids.iter().map(|id| e_objs.get(id)).collect();
        for (i, gi) in g.iter().enumerate() {
            self.gt_seen[i] |= gi.is_some();
            for (j, ej) in e.iter().enumerate() {
                let d = match (gi, ej) {
                    (Some(a), Some(b)) => self.cfg.distance.between(a, b).min(c),
                    (None, None) => continue,
                    _ => c,
                };
                self.sums[i][j] += d.powf(p);
                self.counts[i][j] += 1;
            }
        }
        for (j, ej) in e.iter().enumerate() {
            self.est_seen[j] |= ej.is_some();
        }
    }

    fn distance(&self) -> f64 {
        let (c, p) = (self.cfg.ospa_cutoff, self.cfg.ospa_order);
        let rows: Vec<usize> = (0..self.gt_ids.len()).filter(|i| self.gt_seen[*i]).collect();
        let cols: Vec<usize> = (0..self.est_ids.len()).filter(|j| self.est_seen[*j]).collect();
        let (n, m) = (rows.len(), cols.len());
        if n == 0 && m == 0 {
            return 0.0;
        }
        if n == 0 || m == 0 {
            return c;
        }
        let mut cost = CostMatrix::infeasible(n, m);
        for (r, i) in rows.iter().enumerate() {
            for (k, j) in cols.iter().enumerate() {
                let count = self.counts[*i][*j];
                // trajectory-level base distance, order p, already cut off
                let d = (self.sums[*i][*j] / count as f64).powf(1.0 / p);
                cost.set(r, k, d.powf(p));
            }
        }
        let assignment = solve_assignment(&cost);
        let matched: f64 = cost.total_cost(&assignment);
        let unmatched = n.max(m) - n.min(m);
        ((matched + c.powf(p) * unmatched as f64) / n.max(m) as f64).powf(1.0 / p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseScores {
    /// Mean per-joint position error in millimeters.
    pub mpjpe_mm: f64,
    /// Percentage of joints within the PCK threshold.
    pub pck: f64,
    pub matched_persons: usize,
    pub joints: usize,
}

/// Per-joint errors (meters) over persons matched per frame by ground-plane
/// distance under `cfg.person_match_radius`.
pub fn joint_errors(gt: &TrajectorySet, est: &TrajectorySet, cfg: &MetricConfig) -> (usize, Vec<f64>) {
    let mut persons = 0;
    let mut errors = Vec::new();
    let ground = |a: &ObjectState, b: &ObjectState| (a.position.xy() - b.position.xy()).norm();
    for (frame, g_objs) in gt.frames() {
        let Some(e_objs) = est.frame(frame) else { continue };
        let g: Vec<(u64, &ObjectState)> = g_objs.iter().map(|(id, s)| (*id, s)).collect();
        let e: Vec<(u64, &ObjectState)> = e_objs.iter().map(|(id, s)| (*id, s)).collect();
        for (i, j, _) in match_frame(&g, &e, ground, cfg.person_match_radius) {
            persons += 1;
            errors.extend(g[i].1.keypoints.iter().zip(&e[j].1.keypoints).map(|(a, b)| (a - b).norm()));
        }
    }
    (persons, errors)
}

pub fn pose_scores(gt: &TrajectorySet, est: &TrajectorySet, cfg: &MetricConfig) -> Result<PoseScores> {
    let (persons, errors) = joint_errors(gt, est, cfg);
    if errors.is_empty() {
        return Err(Error::UndefinedMetric("no matched persons with keypoints"));
    }
    let n = errors.len() as f64;
    Ok(PoseScores {
        mpjpe_mm: 1000.0 * errors.iter().sum::<f64>() / n,
        pck: 100.0 * errors.iter().filter(|e| **e <= cfg.pck_threshold).count() as f64 / n,
        matched_persons: persons,
        joints: errors.len(),
    })
}

/// Mean per-joint position error in millimeters.
pub fn mpjpe(gt: &TrajectorySet, est: &TrajectorySet, cfg: &MetricConfig) -> Result<f64> {
    pose_scores(gt, est, cfg).map(|s| s.mpjpe_mm)
}

/// Percentage of correct keypoints.
pub fn pck(gt: &TrajectorySet, est: &TrajectorySet, cfg: &MetricConfig) -> Result<f64> {
    pose_scores(gt, est, cfg).map(|s| s.pck)
}

/// Everything the evaluate command reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub clear: ClearMot,
    pub identity: IdScores,
    /// Last value of the OSPA(2) series.
    pub ospa2: f64,
    pub ospa2_series: Vec<(u64, f64)>,
    pub pose: Option<PoseScores>,
}

pub fn evaluate(gt: &TrajectorySet, est: &TrajectorySet, cfg: &MetricConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let clear = clearmot(gt, est, cfg)?;
    let identity = idf1(gt, est, cfg)?;
    let ospa2_series = ospa2(gt, est, cfg);
    Ok(MetricsReport {
        clear,
        identity,
        ospa2: ospa2_series.last().map_or(0.0, |(_, v)| *v),
        ospa2_series,
        pose: pose_scores(gt, est, cfg).ok(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(x: f64, y: f64) -> ObjectState {
        ObjectState {
            position: Vector3::new(x, y, 0.9),
            half_lengths: Vector3::new(0.3, 0.3, 0.9),
            keypoints: vec![Vector3::new(x, y, 1.7), Vector3::new(x + 0.2, y, 1.4)],
        }
    }

    fn set(entries: &[(u64, u64, f64, f64)]) -> TrajectorySet {
        let mut s = TrajectorySet::new();
        for (f, id, x, y) in entries {
            s.insert(*f, *id, obj(*x, *y));
        }
        s
    }

    fn two_walkers(frames: u64) -> TrajectorySet {
        let mut s = TrajectorySet::new();
        for f in 0..frames {
            s.insert(f, 1, obj(0.1 * f as f64, 0.0));
            s.insert(f, 2, obj(0.1 * f as f64, 3.0));
        }
        s
    }

    #[test]
    fn identical_sets_are_perfect() {
        let gt = two_walkers(10);
        let cfg = MetricConfig::default();
        let r = evaluate(&gt, &gt, &cfg).unwrap();
        assert_eq!((r.clear.false_positives, r.clear.false_negatives, r.clear.id_switches), (0, 0, 0));
        assert_eq!(r.clear.mota, 1.0);
        assert_eq!(r.identity.idf1, 1.0);
        assert!(r.ospa2_series.iter().all(|(_, v)| *v == 0.0));
        let pose = r.pose.unwrap();
        assert_eq!((pose.mpjpe_mm, pose.pck), (0.0, 100.0));
    }

    #[test]
    fn empty_estimates() {
        let mut gt = TrajectorySet::new();
        for f in 0..50 {
            gt.insert(f, 1, obj(0.0, 0.0));
            gt.insert(f, 2, obj(5.0, 0.0));
        }
        let est = TrajectorySet::new();
        let cfg = MetricConfig::default();
        let c = clearmot(&gt, &est, &cfg).unwrap();
        assert_eq!((c.false_negatives, c.false_positives, c.mota), (100, 0, 0.0));
        assert_eq!(idf1(&gt, &est, &cfg).unwrap().idf1, 0.0);
        assert!(ospa2(&gt, &est, &cfg).iter().all(|(_, v)| *v == 1.0));
        assert!(matches!(mpjpe(&gt, &est, &cfg), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn empty_ground_truth_is_undefined() {
        let est = two_walkers(3);
        let cfg = MetricConfig::default();
        assert!(matches!(clearmot(&TrajectorySet::new(), &est, &cfg), Err(Error::UndefinedMetric(_))));
        assert!(idf1(&TrajectorySet::new(), &est, &cfg).is_err());
    }

    #[test]
    fn hand_enumerated_id_swap() {
        // Two people 3 m apart. The estimate labels follow them for frames
        // 0-1, then swap for frames 2-4; estimate 9 is clutter at frame 3 and
        // person 2 is missed at frame 4.
        let gt = set(&[
            (0, 1, 0.0, 0.0),
            (0, 2, 0.0, 3.0),
            (1, 1, 0.1, 0.0),
            (1, 2, 0.1, 3.0),
            (2, 1, 0.2, 0.0),
            (2, 2, 0.2, 3.0),
            (3, 1, 0.3, 0.0),
            (3, 2, 0.3, 3.0),
            (4, 1, 0.4, 0.0),
            (4, 2, 0.4, 3.0),
        ]);
        let est = set(&[
            (0, 10, 0.0, 0.1),
            (0, 20, 0.0, 3.0),
            (1, 10, 0.1, 0.0),
            (1, 20, 0.1, 3.0),
            (2, 20, 0.2, 0.0),
            (2, 10, 0.2, 3.0),
            (3, 20, 0.3, 0.0),
            (3, 10, 0.3, 3.0),
            (3, 9, 9.0, 9.0),
            (4, 20, 0.4, 0.0),
        ]);
        let cfg = MetricConfig::default();
        let c = clearmot(&gt, &est, &cfg).unwrap();
        // frame 2: both ground truths change partner, two switches
        assert_eq!(c.id_switches, 2);
        assert_eq!(c.false_positives, 1);
        assert_eq!(c.false_negatives, 1);
        assert_eq!(c.matches, 9);
        assert!((c.mota - (1.0 - 4.0 / 10.0)).abs() < 1e-12);
        assert!((c.rmse - (0.01_f64 / 9.0).sqrt()).abs() < 1e-12);

        // IDTP: 1↔20 covers frames 2,3,4 (3), 2↔10 covers 2,3 (2); the
        // alternative 1↔10, 2↔20 covers 0,1 twice (4). Best is 5.
        let id = idf1(&gt, &est, &cfg).unwrap();
        assert_eq!(id.idtp, 5);
        assert_eq!((id.idfp, id.idfn), (5, 5));
        assert!((id.idf1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn continuity_is_preferred_over_optimal_rematch() {
        // estimate 20 drifts towards gt 1 while staying under the threshold,
        // estimate 10 sits exactly on gt 1 from frame 1 on
        let gt = set(&[(0, 1, 0.0, 0.0), (1, 1, 0.0, 0.0)]);
        let est = set(&[(0, 20, 0.5, 0.0), (1, 20, 0.8, 0.0), (1, 10, 0.0, 0.0)]);
        let c = clearmot(&gt, &est, &MetricConfig::default()).unwrap();
        assert_eq!((c.id_switches, c.false_positives), (0, 1));
    }

    /// IDF1 by enumerating all partial injections of gt ids into est ids.
    fn brute_idtp(gt: &TrajectorySet, est: &TrajectorySet, cfg: &MetricConfig) -> usize {
        let (gi, ei) = (gt.ids(), est.ids());
        let overlap = |g: u64, e: u64| {
            gt.frames()
                .filter(|(f, o)| {
                    let (Some(a), Some(b)) = (o.get(&g), est.frame(*f).and_then(|x| x.get(&e))) else { return false };
                    cfg.distance.between(a, b) <= cfg.threshold()
                })
                .count()
        };
        fn rec(k: usize, used: &mut Vec<bool>, gi: &[u64], ei: &[u64], f: &dyn Fn(u64, u64) -> usize) -> usize {
            if k == gi.len() {
                return 0;
            }
            let mut best = rec(k + 1, used, gi, ei, f);
            for j in 0..ei.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.max(f(gi[k], ei[j]) + rec(k + 1, used, gi, ei, f));
                    used[j] = false;
                }
            }
            best
        }
        rec(0, &mut vec![false; ei.len()], &gi, &ei, &overlap)
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn idf1_matches_brute_force_on_random_fragments() {
        let cfg = MetricConfig::default();
        let mut seed = 7;
        for _ in 0..40 {
            let mut gt = TrajectorySet::new();
            let mut est = TrajectorySet::new();
            for f in 0..12 {
                for g in 0..3u64 {
                    if lcg(&mut seed) < 0.9 {
                        gt.insert(f, g, obj(2.0 * g as f64, 0.0));
                    }
                    if lcg(&mut seed) < 0.8 {
                        // each estimate fragment covers some person with a random label
                        let label = (lcg(&mut seed) * 5.0) as u64;
                        est.insert(f, 100 + label, obj(2.0 * g as f64 + 0.3 * lcg(&mut seed), 0.0));
                    }
                }
            }
            assert_eq!(idf1(&gt, &est, &cfg).unwrap().idtp, brute_idtp(&gt, &est, &cfg));
        }
    }

    /// OSPA(2) at the last frame by exhaustive search over assignments.
    fn brute_ospa2(gt: &TrajectorySet, est: &TrajectorySet, cfg: &MetricConfig) -> f64 {
        let c = cfg.ospa_cutoff;
        let frames = gt.union_frames(est);
        let pair = |g: u64, e: u64| {
            let mut sum = 0.0;
            let mut n = 0;
            for f in &frames {
                let a = gt.frame(*f).and_then(|o| o.get(&g));
                let b = est.frame(*f).and_then(|o| o.get(&e));
                let d = match (a, b) {
                    (Some(a), Some(b)) => cfg.distance.between(a, b).min(c),
                    (None, None) => continue,
                    _ => c,
                };
                sum += d;
                n += 1;
            }
            sum / n as f64
        };
        let (gi, ei) = (gt.ids(), est.ids());
        let (small, large, swap) = if gi.len() <= ei.len() { (&gi, &ei, false) } else { (&ei, &gi, true) };
        let mut best = f64::INFINITY;
        let mut perm: Vec<usize> = (0..large.len()).collect();
        permute(&mut perm, 0, &mut |p| {
            let total: f64 = small
                .iter()
                .enumerate()
                .map(|(k, s)| if swap { pair(large[p[k]], *s) } else { pair(*s, large[p[k]]) })
                .sum();
            best = best.min(total);
        });
        (best + c * (large.len() - small.len()) as f64) / large.len() as f64
    }

    fn permute(v: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
        if k == v.len() {
            visit(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permute(v, k + 1, visit);
            v.swap(k, i);
        }
    }

    #[test]
    fn ospa2_matches_exhaustive_search() {
        let cfg = MetricConfig::default();
        let mut seed = 11;
        for trial in 0..30 {
            let mut gt = TrajectorySet::new();
            let mut est = TrajectorySet::new();
            let (n_gt, n_est) = (2 + trial % 2, 1 + trial % 4);
            for f in 0..8 {
                for g in 0..n_gt {
                    if lcg(&mut seed) < 0.8 {
                        gt.insert(f, g, obj(lcg(&mut seed) * 2.0, lcg(&mut seed)));
                    }
                }
                for e in 0..n_est {
                    if lcg(&mut seed) < 0.8 {
                        est.insert(f, e, obj(lcg(&mut seed) * 2.0, lcg(&mut seed)));
                    }
                }
            }
            if gt.is_empty() || est.is_empty() {
                continue;
            }
            let series = ospa2(&gt, &est, &cfg);
            let last = series.last().unwrap().1;
            assert!((last - brute_ospa2(&gt, &est, &cfg)).abs() < 1e-12, "trial {trial}");
            assert!(series.iter().all(|(_, v)| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn ospa2_two_track_toy() {
        // one estimate follows gt 1 at 0.2 m; gt 2 has no estimate
        let gt = set(&[(0, 1, 0.0, 0.0), (0, 2, 5.0, 0.0), (1, 1, 0.0, 0.0), (1, 2, 5.0, 0.0)]);
        let est = set(&[(0, 7, 0.2, 0.0), (1, 7, 0.2, 0.0)]);
        let series = ospa2(&gt, &est, &MetricConfig::default());
        for (_, v) in series {
            assert!((v - (0.2 + 1.0) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ospa2_sliding_window_forgets() {
        let mut gt = TrajectorySet::new();
        let mut est = TrajectorySet::new();
        for f in 0..10 {
            gt.insert(f, 1, obj(0.0, 0.0));
            // wrong for the first 5 frames, exact afterwards
            est.insert(f, 1, obj(if f < 5 { 3.0 } else { 0.0 }, 0.0));
        }
        let cfg = MetricConfig { ospa_window: Some(3), ..Default::default() };
        let series = ospa2(&gt, &est, &cfg);
        assert_eq!(series[2].1, 1.0);
        assert_eq!(series[9].1, 0.0);
        let growing = ospa2(&gt, &est, &MetricConfig::default());
        assert!((growing[9].1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pose_offsets() {
        let gt = two_walkers(5);
        let cfg = MetricConfig::default();
        let shifted = gt.translated(&Vector3::new(0.0, 0.0, 0.01));
        assert!((mpjpe(&gt, &shifted, &cfg).unwrap() - 10.0).abs() < 1e-9);

        // first joint displaced 0.3 m, second exact → half the joints correct
        let mut est = TrajectorySet::new();
        for (f, objects) in gt.frames() {
            for (id, s) in objects {
                let mut s = s.clone();
                s.keypoints[0].z += 0.3;
                est.insert(f, *id, s);
            }
        }
        assert!((pck(&gt, &est, &cfg).unwrap() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn giou_distance_threshold() {
        let gt = set(&[(0, 1, 0.0, 0.0)]);
        let near = set(&[(0, 5, 0.1, 0.0)]);
        let far = set(&[(0, 5, 0.7, 0.0)]);
        let cfg = MetricConfig { distance: BaseDistance::Giou, ..Default::default() };
        assert_eq!(clearmot(&gt, &near, &cfg).unwrap().matches, 1);
        assert_eq!(clearmot(&gt, &far, &cfg).unwrap().matches, 0);
    }
}
