//! Experiment drivers shared by the command line and the acceptance suite.

use std::time::Instant;

use mvmot::metrics::{evaluate, ospa2, pose_scores, MetricConfig, MetricsReport, TrajectorySet};
use mvmot::simulator::{apply_deletion, Scenario, Simulator};
use mvmot::{CameraModel, Error, FrameDetections, Result, Tracker, TrackerConfig};
use serde::{Deserialize, Serialize};

use crate::formats::{DetectionFile, ScheduleFile};

/// Estimates of a run plus the time spent inside the tracker.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub estimates: TrajectorySet,
    pub frames: u64,
    pub tracking_seconds: f64,
}

impl RunOutput {
    /// Frames per second of the tracking loop alone.
    pub fn fps(&self) -> f64 {
        if self.tracking_seconds > 0.0 {
            self.frames as f64 / self.tracking_seconds
        } else {
            f64::INFINITY
        }
    }
}

/// Feeds frames `0..frames` through a fresh tracker. Only `Tracker::step` is timed.
pub fn run_tracker(
    config: &TrackerConfig,
    frames: u64,
    mut frame_input: impl FnMut(u64) -> (FrameDetections, Vec<CameraModel>),
) -> Result<RunOutput> {
    let mut tracker = Tracker::new(*config)?;
    let mut estimates = TrajectorySet::new();
    let mut seconds = 0.0;
    for t in 0..frames {
        let (detections, cameras) = frame_input(t);
        let start = Instant::now();
        let out = tracker.step(&detections, &cameras, t);
        seconds += start.elapsed().as_secs_f64();
        estimates.extend_estimates(t, &out);
    }
    Ok(RunOutput { estimates, frames, tracking_seconds: seconds })
}

/// Tracks a detection file against a calibration.
pub fn track_detections(detections: &DetectionFile, cameras: &[CameraModel], config: &TrackerConfig) -> Result<RunOutput> {
    for frame in detections.frames.values() {
        for id in frame.keys() {
            if !cameras.iter().any(|c| c.id == *id) {
                return Err(Error::InvalidConfig(format!("detections reference camera {id}, absent from the calibration")));
            }
        }
    }
    if detections.keypoints != 0 && detections.keypoints != config.keypoints.count() {
        return Err(Error::InvalidConfig(format!(
            "detections carry {} keypoints but the tracker expects {}",
            detections.keypoints,
            config.keypoints.count()
        )));
    }
    let frames = detections.last_frame().map_or(0, |f| f + 1);
    let empty = FrameDetections::new();
    run_tracker(config, frames, |t| (detections.frames.get(&t).unwrap_or(&empty).clone(), cameras.to_vec()))
}

/// Renders every frame of a simulation, optionally thinned by random deletion.
pub fn render_all(sim: &Simulator, deletion: Option<(f64, u64)>) -> DetectionFile {
    let mut file = DetectionFile::new(sim.scenario().keypoints.count());
    for t in 0..sim.frames() {
        let mut dets = sim.render(t);
        if let Some((rate, seed)) = deletion {
            dets = apply_deletion(&dets, rate, seed, t);
        }
        if dets.values().any(|d| !d.is_empty()) {
            file.frames.insert(t, dets);
        }
    }
    file
}

/// Runs the tracker directly on a simulation, honoring its camera schedule.
pub fn track_simulation(sim: &Simulator, config: &TrackerConfig, deletion: Option<(f64, u64)>) -> Result<RunOutput> {
    if sim.scenario().keypoints != config.keypoints {
        return Err(Error::InvalidConfig("scenario and tracker keypoint conventions differ".into()));
    }
    run_tracker(config, sim.frames(), |t| {
        let mut dets = sim.render(t);
        if let Some((rate, seed)) = deletion {
            dets = apply_deletion(&dets, rate, seed, t);
        }
        (dets, sim.cameras_at(t))
    })
}

pub fn simulate_and_evaluate(scenario: &Scenario, config: &TrackerConfig, metrics: &MetricConfig) -> Result<(RunOutput, MetricsReport)> {
    let sim = Simulator::new(scenario.clone())?;
    let run = track_simulation(&sim, config, None)?;
    let report = evaluate(sim.ground_truth(), &run.estimates, metrics)?;
    Ok((run, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau_c: f64,
    pub mota: f64,
    pub idf1: f64,
    pub ospa2: f64,
}

/// Tracks the same simulation once per assignment cost threshold.
pub fn sweep_tau(scenario: &Scenario, config: &TrackerConfig, metrics: &MetricConfig, grid: &[f64]) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("the threshold grid is empty".into()));
    }
    let sim = Simulator::new(scenario.clone())?;
    grid.iter()
        .map(|tau_c| {
            let mut cfg = *config;
            cfg.gating.tau_c = *tau_c;
            let run = track_simulation(&sim, &cfg, None)?;
            let report = evaluate(sim.ground_truth(), &run.estimates, metrics)?;
            Ok(SweepRow { tau_c: *tau_c, mota: report.clear.mota, idf1: report.identity.idf1, ospa2: report.ospa2 })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub start: u64,
    pub end: u64,
    pub cameras: Vec<u32>,
    /// OSPA(2) at the last frame of the segment, all cameras on.
    pub baseline_ospa2: f64,
    /// OSPA(2) at the last frame of the segment under the schedule.
    pub ospa2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconfigReport {
    pub baseline: Vec<(u64, f64)>,
    pub reconfigured: Vec<(u64, f64)>,
    pub segments: Vec<SegmentSummary>,
    pub baseline_id_switches: usize,
    pub id_switches: usize,
}

impl ReconfigReport {
    pub fn final_baseline(&self) -> f64 {
        self.baseline.last().map_or(0.0, |(_, v)| *v)
    }

    pub fn final_reconfigured(&self) -> f64 {
        self.reconfigured.last().map_or(0.0, |(_, v)| *v)
    }
}

/// Runs a scenario with every camera on and again under `schedule`.
pub fn reconfig(scenario: &Scenario, schedule: &ScheduleFile, config: &TrackerConfig, metrics: &MetricConfig) -> Result<ReconfigReport> {
    let ids: Vec<u32> = scenario.cameras.iter().map(|c| c.id).collect();
    let mut base = scenario.clone();
    base.schedule.clear();
    let mut scheduled = scenario.clone();
    scheduled.schedule = schedule.intervals(&ids)?;

    let run = |s: Scenario| -> Result<(Vec<(u64, f64)>, usize)> {
        let sim = Simulator::new(s)?;
        let out = track_simulation(&sim, config, None)?;
        let clear = mvmot::metrics::clearmot(sim.ground_truth(), &out.estimates, metrics)?;
        Ok((ospa2(sim.ground_truth(), &out.estimates, metrics), clear.id_switches))
    };
    let (baseline, baseline_id_switches) = run(base)?;
    let (reconfigured, id_switches) = run(scheduled)?;

    let value_at = |series: &[(u64, f64)], frame: u64| {
        series.iter().take_while(|(f, _)| *f <= frame).last().map_or(0.0, |(_, v)| *v)
    };
    let segments = schedule
        .configurations
        .iter()
        .map(|c| SegmentSummary {
            start: c.start,
            end: c.end,
            cameras: c.cameras.clone(),
            baseline_ospa2: value_at(&baseline, c.end.saturating_sub(1)),
            ospa2: value_at(&reconfigured, c.end.saturating_sub(1)),
        })
        .collect();
    Ok(ReconfigReport { baseline, reconfigured, segments, baseline_id_switches, id_switches })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub rate: f64,
    pub runs: usize,
    pub mean_mpjpe_mm: f64,
    pub std_mpjpe_mm: f64,
    pub mean_mota: f64,
}

/// Detection-deletion ablation: for each run the scenario is re-seeded and
/// the same run seed drives the deletion at every rate.
pub fn ablate(scenario: &Scenario, config: &TrackerConfig, metrics: &MetricConfig, rates: &[f64], runs: usize) -> Result<Vec<AblationRow>> {
    if rates.is_empty() || runs == 0 {
        return Err(Error::InvalidConfig("the ablation needs at least one rate and one run".into()));
    }
    if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::InvalidConfig("deletion rates must lie in [0, 1]".into()));
    }
    let sims = (0..runs as u64)
        .map(|k| {
            let mut s = scenario.clone();
            s.seed = scenario.seed.wrapping_add(k);
            Simulator::new(s)
        })
        .collect::<Result<Vec<_>>>()?;
    rates
        .iter()
        .map(|rate| {
            let mut errors = Vec::with_capacity(runs);
            let mut motas = Vec::with_capacity(runs);
            for (k, sim) in sims.iter().enumerate() {
                let out = track_simulation(sim, config, Some((*rate, 1000 + k as u64)))?;
                errors.push(pose_scores(sim.ground_truth(), &out.estimates, metrics)?.mpjpe_mm);
                motas.push(mvmot::metrics::clearmot(sim.ground_truth(), &out.estimates, metrics)?.mota);
            }
            let n = errors.len() as f64;
            let mean = errors.iter().sum::<f64>() / n;
            let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
            Ok(AblationRow {
                rate: *rate,
                runs,
                mean_mpjpe_mm: mean,
                std_mpjpe_mm: var.sqrt(),
                mean_mota: motas.iter().sum::<f64>() / n,
            })
        })
        .collect()
}

