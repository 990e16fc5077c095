//! Per-camera data association: ground-plane gating, −log q cost matrices and
//! an exact rectangular linear assignment solver with native miss handling.

use serde::{Deserialize, Serialize};

use crate::detection::Detection;
use crate::error::{Error, Result};
use crate::filtering::{log_gaussian_density, predict_measurement_ks, GaussianState, UtConfig};
use crate::geometry::{bbox_bottom_to_ground, BBox2D, CameraModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatingConfig {
    /// Ground-plane gate radius in meters.
    pub tau_g: f64,
    /// Maximum assignment cost in nats.
    pub tau_c: f64,
    /// Nominal miss cost in nats. Only used when reporting hypothesis costs;
    /// the solver treats misses natively.
    pub miss_cost: f64,
}

impl Default for GatingConfig {
    fn default() -> Self {
        Self { tau_g: 2.0, tau_c: 10.0, miss_cost: 100.0 }
    }
}

impl GatingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_g > 0.0 && self.tau_c > 0.0 && self.miss_cost > 0.0) {
            return Err(Error::InvalidConfig("gating thresholds must be positive".into()));
        }
        Ok(())
    }
}

/// Dense row-major cost matrix; `+∞` marks an infeasible pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn infeasible(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![f64::INFINITY; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged cost matrix");
        Self { rows: rows.len(), cols, data: rows.iter().flatten().copied().collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Stores a cost; NaN and −∞ are treated as infeasible.
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = if v.is_nan() || v == f64::NEG_INFINITY { f64::INFINITY } else { v };
    }

    pub fn is_feasible(&self, r: usize, c: usize) -> bool {
        self.get(r, c).is_finite()
    }

    /// Sum of the assigned entries.
    pub fn total_cost(&self, assignment: &[Option<usize>]) -> f64 {
        assignment
            .iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| self.get(r, c)))
            .sum()
    }
}

/// Row assignment: `assignment[track] = Some(detection)` or `None` for a miss.
pub type Assignment = Vec<Option<usize>>;

/// Per-camera assignments keyed by camera id.
pub type AssignmentMap = std::collections::BTreeMap<u32, Assignment>;

/// Ground-plane gate: true iff the bbox bottom back-projects within `tau_g` of the track.
pub fn gate(b: &BBox2D, track_mean: &GaussianState, cam: &CameraModel, cfg: &GatingConfig) -> bool {
    match bbox_bottom_to_ground(b, cam) {
        Ok(g) => (track_mean.position().xy() - g).norm() <= cfg.tau_g,
        Err(_) => false,
    }
}

/// C[i, j] = −log q for gated pairs with cost ≤ τ_C, +∞ otherwise.
pub fn build_cost_matrix(
    tracks: &[&GaussianState],
    detections: &[Detection],
    cam: &CameraModel,
    cfg: &GatingConfig,
    ut: &UtConfig,
) -> CostMatrix {
    let mut c = CostMatrix::infeasible(tracks.len(), detections.len());
    let grounds: Vec<_> = detections.iter().map(|d| bbox_bottom_to_ground(&d.bbox, cam).ok()).collect();
    for (i, track) in tracks.iter().enumerate() {
        let position = track.position().xy();
        // q does not depend on the detection beyond the final density evaluation
        let mut prediction = None;
        for (j, det) in detections.iter().enumerate() {
            let Some(g) = grounds[j] else { continue };
            if (position - g).norm() > cfg.tau_g {
                continue;
            }
            let pred = prediction.get_or_insert_with(|| predict_measurement_ks(track, cam, ut).ok());
            let Some(pred) = pred.as_ref() else { break };
            if let Some(log_q) = log_gaussian_density(det.bbox.as_vector(), &pred.mean, &pred.innovation_cov) {
                let cost = -log_q;
                if cost <= cfg.tau_c {
                    c.set(i, j, cost);
                }
            }
        }
    }
    c
}

/// Optimal partial assignment under the miss-is-very-expensive convention:
/// maximizes the number of feasible matches, then minimizes their total cost.
pub fn solve_assignment(c: &CostMatrix) -> Assignment {
    let span = (0..c.rows)
        .map(|r| {
            (0..c.cols)
                .map(|j| c.get(r, j))
                .filter(|v| v.is_finite())
                .fold(0.0_f64, |m, v| m.max(v.abs()))
        })
        .sum::<f64>();
    // any change in match count outweighs every possible change in finite cost
    let miss_cost = 1.0 + 2.0 * span;
    solve_with_miss_cost(c, miss_cost)
}

/// Optimal partial assignment where leaving a row unmatched costs `miss_cost`.
pub fn solve_with_miss_cost(c: &CostMatrix, miss_cost: f64) -> Assignment {
    let (n, m) = (c.rows, c.cols);
    if n == 0 {
        return Vec::new();
    }
    // Columns m..m+n are private miss slots: row i may only use slot m+i.
    let width = m + n;
    let entry = |i: usize, j: usize| -> f64 {
        if j < m {
            c.get(i, j)
        } else if j - m == i {
            miss_cost
        } else {
            f64::INFINITY
        }
    };
    let col4row = shortest_augmenting_path(n, width, entry);
    col4row.into_iter().map(|j| (j < m).then_some(j)).collect()
}

/// Shortest augmenting path (Jonker–Volgenant / Crouse) for `n ≤ width`
/// with infeasible (+∞) entries. Every row must have a feasible completion.
fn shortest_augmenting_path(n: usize, width: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    const NONE: usize = usize::MAX;
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; width];
    let mut col4row = vec![NONE; n];
    let mut row4col = vec![NONE; width];
    let mut path = vec![NONE; width];
    let mut shortest = vec![f64::INFINITY; width];
    let mut scanned_rows = vec![false; n];
    let mut scanned_cols = vec![false; width];
    let mut remaining: Vec<usize> = Vec::with_capacity(width);

    for cur_row in 0..n {
        shortest.fill(f64::INFINITY);
        scanned_rows.fill(false);
        scanned_cols.fill(false);
        remaining.clear();
        remaining.extend(0..width);

        let mut min_val = 0.0;
        let mut i = cur_row;
        let mut sink = NONE;
        while sink == NONE {
            scanned_rows[i] = true;
            let mut best_idx = NONE;
            let mut lowest = f64::INFINITY;
            for (idx, &j) in remaining.iter().enumerate() {
                let cij = cost(i, j);
                if cij.is_finite() {
                    let r = min_val + cij - u[i] - v[j];
                    if r < shortest[j] {
                        path[j] = i;
                        shortest[j] = r;
                    }
                }
                // ties prefer a free column, then the lowest column index
                let prefer_free = shortest[j] == lowest
                    && best_idx != NONE
                    && row4col[j] == NONE
                    && row4col[remaining[best_idx]] != NONE;
                if shortest[j] < lowest || prefer_free {
                    lowest = shortest[j];
                    best_idx = idx;
                }
            }
            if !lowest.is_finite() {
                unreachable!("every row owns a feasible miss slot");
            }
            min_val = lowest;
            let j = remaining.remove(best_idx);
            scanned_cols[j] = true;
            if row4col[j] == NONE {
                sink = j;
            } else {
                i = row4col[j];
            }
        }

        u[cur_row] += min_val;
        for r in 0..n {
            if scanned_rows[r] && r != cur_row {
                u[r] += min_val - shortest[col4row[r]];
            }
        }
        for j in 0..width {
            if scanned_cols[j] {
                v[j] -= min_val - shortest[j];
            }
        }

        let mut j = sink;
        loop {
            let r = path[j];
            row4col[j] = r;
            std::mem::swap(&mut col4row[r], &mut j);
            if r == cur_row {
                break;
            }
        }
    }
    col4row
}

/// Runs cost construction and assignment independently for every camera.
/// Inactive cameras and cameras without detections yield all-miss assignments.
pub fn associate_all(
    tracks: &[&GaussianState],
    detections: &crate::detection::FrameDetections,
    cams: &[CameraModel],
    cfg: &GatingConfig,
    ut: &UtConfig,
) -> AssignmentMap {
    cams.iter()
        .map(|cam| {
            let dets = detections.get(&cam.id).map(Vec::as_slice).unwrap_or(&[]);
            let assignment = if cam.active && !dets.is_empty() {
                solve_assignment(&build_cost_matrix(tracks, dets, cam, cfg, ut))
            } else {
                vec![None; tracks.len()]
            };
            (cam.id, assignment)
        })
        .collect()
}
