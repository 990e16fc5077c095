//! Gaussian state machinery: constant-velocity prediction, the unscented
//! transform, and per-camera UKF corrections for the kinematic/shape block
//! and for each keypoint block.
//!
//! The kinematic/shape block is `[ρ (3), ρ̇ (3), s (3)]`. Keypoints are kept as
//! independent 6-dim blocks `[p_i (3), ṗ_i (3)]`, so a keypoint update costs
//! O(P) rather than O(P³).

use nalgebra::{DMatrix, Matrix3x4, SMatrix, SVector, Vector2, Vector3, Vector4, Vector6};
use serde::{Deserialize, Serialize};

use crate::detection::Keypoint2D;
use crate::error::{Error, Result};
use crate::geometry::{project_ellipsoid, project_point, BBox2D, CameraModel, Ellipsoid3D};

pub type KsVector = SVector<f64, 9>;
pub type KsMatrix = SMatrix<f64, 9, 9>;
pub type KpVector = Vector6<f64>;
pub type KpMatrix = SMatrix<f64, 6, 6>;

const CHOLESKY_JITTER: f64 = 1e-9;
const EIGEN_FLOOR: f64 = 1e-9;
const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UtConfig {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UtConfig {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 2.0, kappa: 2.0 }
    }
}

impl UtConfig {
    pub fn lambda(&self, dim: usize) -> f64 {
        self.alpha * self.alpha * (dim as f64 + self.kappa) - dim as f64
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig("UT alpha must lie in (0, 1]".into()));
        }
        if !(dim as f64 + self.lambda(dim) > 0.0) {
            return Err(Error::InvalidConfig("UT requires L + lambda > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionConfig {
    /// Frame period in seconds.
    pub dt: f64,
    /// Acceleration noise std of the object center, m/s².
    pub accel_noise: f64,
    /// Per-step std of the log-shape random walk.
    pub shape_noise: f64,
    /// Acceleration noise std of the keypoints, m/s².
    pub keypoint_accel_noise: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self { dt: 1.0 / 30.0, accel_noise: 0.5, shape_noise: 0.05, keypoint_accel_noise: 2.0 }
    }
}

impl MotionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::InvalidConfig("dt must be positive".into()));
        }
        if !(self.accel_noise > 0.0 && self.shape_noise > 0.0) {
            return Err(Error::InvalidConfig("process noise must be positive".into()));
        }
        if !(self.keypoint_accel_noise >= self.accel_noise) {
            return Err(Error::InvalidConfig("keypoint accel noise must be at least the center accel noise".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeypointGaussian {
    pub mean: KpVector,
    pub cov: KpMatrix,
}

impl KeypointGaussian {
    pub fn position(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(0).into_owned()
    }
}

/// Gaussian track state: the 9-dim kinematic/shape block plus one 6-dim block per keypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: KsVector,
    pub cov: KsMatrix,
    pub keypoints: Vec<KeypointGaussian>,
}

impl GaussianState {
    pub fn position(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(0).into_owned()
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(3).into_owned()
    }

    pub fn log_shape(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(6).into_owned()
    }

    pub fn ellipsoid(&self) -> Ellipsoid3D {
        Ellipsoid3D::new(self.position(), self.log_shape())
    }

    pub fn keypoint_positions(&self) -> Vec<Vector3<f64>> {
        self.keypoints.iter().map(KeypointGaussian::position).collect()
    }
}

/// Sigma points with their mean and covariance weights.
#[derive(Debug, Clone)]
pub struct SigmaPoints<const L: usize> {
    pub points: Vec<SVector<f64, L>>,
    pub mean_weights: Vec<f64>,
    pub cov_weights: Vec<f64>,
}

/// Generates the 2L+1 scaled sigma points of N(mean, cov).
pub fn unscented_transform<const L: usize>(
    mean: &SVector<f64, L>,
    cov: &SMatrix<f64, L, L>,
    cfg: &UtConfig,
) -> Result<SigmaPoints<L>> {
    cfg.validate(L)?;
    let lambda = cfg.lambda(L);
    let spread = L as f64 + lambda;
    let chol = (cov * spread)
        .cholesky()
        .or_else(|| ((cov + SMatrix::<f64, L, L>::identity() * CHOLESKY_JITTER) * spread).cholesky())
        .ok_or(Error::NotPositiveDefinite)?;
    let root = chol.l();

    let mut points = Vec::with_capacity(2 * L + 1);
    points.push(*mean);
    for i in 0..L {
        points.push(mean + root.column(i));
    }
    for i in 0..L {
        points.push(mean - root.column(i));
    }

    let w0 = lambda / spread;
    let wi = 1.0 / (2.0 * spread);
    let mut mean_weights = vec![wi; 2 * L + 1];
    let mut cov_weights = vec![wi; 2 * L + 1];
    mean_weights[0] = w0;
    cov_weights[0] = w0 + 1.0 - cfg.alpha * cfg.alpha + cfg.beta;
    Ok(SigmaPoints { points, mean_weights, cov_weights })
}

/// UT-propagated measurement moments.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementPrediction<const L: usize, const M: usize> {
    /// Predicted measurement mean ȳ.
    pub mean: SVector<f64, M>,
    /// Innovation covariance S, including the additive measurement noise.
    pub innovation_cov: SMatrix<f64, M, M>,
    /// State/measurement cross covariance P_xy.
    pub cross_cov: SMatrix<f64, L, M>,
}

/// Pushes N(mean, cov) through `observe` with the UT. Fails if any sigma
/// point is not observable.
pub fn predict_measurement<const L: usize, const M: usize, F>(
    mean: &SVector<f64, L>,
    cov: &SMatrix<f64, L, L>,
    noise: &SMatrix<f64, M, M>,
    cfg: &UtConfig,
    observe: F,
) -> Result<MeasurementPrediction<L, M>>
where
    F: Fn(&SVector<f64, L>) -> Result<SVector<f64, M>>,
{
    let sigma = unscented_transform(mean, cov, cfg)?;
    let ys = sigma.points.iter().map(&observe).collect::<Result<Vec<_>>>()?;

    let y_mean = ys
        .iter()
        .zip(&sigma.mean_weights)
        .fold(SVector::<f64, M>::zeros(), |acc, (y, w)| acc + y * *w);
    let mut s = *noise;
    let mut pxy = SMatrix::<f64, L, M>::zeros();
    for ((x, y), w) in sigma.points.iter().zip(&ys).zip(&sigma.cov_weights) {
        let dy = y - y_mean;
        s += dy * dy.transpose() * *w;
        pxy += (x - mean) * dy.transpose() * *w;
    }
    Ok(MeasurementPrediction { mean: y_mean, innovation_cov: symmetrize(&s), cross_cov: pxy })
}

/// Log of the Gaussian density N(z; mean, cov). `None` if `cov` is not positive definite.
pub fn log_gaussian_density<const M: usize>(
    z: &SVector<f64, M>,
    mean: &SVector<f64, M>,
    cov: &SMatrix<f64, M, M>,
) -> Option<f64> {
    let chol = cov.cholesky()?;
    let d = z - mean;
    let maha = d.dot(&chol.solve(&d));
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let value = -0.5 * (M as f64 * LN_2PI + log_det + maha);
    value.is_finite().then_some(value)
}

/// Association likelihood q = N(b; ȳ, S).
pub fn likelihood_q(b: &BBox2D, mean: &Vector4<f64>, innovation_cov: &SMatrix<f64, 4, 4>) -> Result<f64> {
    log_gaussian_density(b.as_vector(), mean, innovation_cov)
        .map(f64::exp)
        .ok_or(Error::NotPositiveDefinite)
}

/// Standard UKF correction given a measurement prediction and an observation.
pub fn ukf_correct<const L: usize, const M: usize>(
    mean: &SVector<f64, L>,
    cov: &SMatrix<f64, L, L>,
    pred: &MeasurementPrediction<L, M>,
    z: &SVector<f64, M>,
) -> Result<(SVector<f64, L>, SMatrix<f64, L, L>)> {
    let chol = pred.innovation_cov.cholesky().ok_or(Error::NotPositiveDefinite)?;
    // K = P_xy S⁻¹  ⇔  S Kᵀ = P_xyᵀ
    let gain = chol.solve(&pred.cross_cov.transpose()).transpose();
    let new_mean = mean + gain * (z - pred.mean);
    let new_cov = cov - gain * pred.innovation_cov * gain.transpose();
    Ok((new_mean, make_psd(&new_cov)))
}

pub fn symmetrize<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

/// Symmetrizes and, if the result is not positive definite, floors its eigenvalues.
pub fn make_psd<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    let sym = symmetrize(m);
    if sym.cholesky().is_some() {
        return sym;
    }
    let eig = DMatrix::from_column_slice(N, N, sym.as_slice()).symmetric_eigen();
    let floored = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&floored) * eig.eigenvectors.transpose();
    symmetrize(&SMatrix::<f64, N, N>::from_column_slice(rebuilt.as_slice()))
}

fn cv_transition(dt: f64) -> KpMatrix {
    let mut f = KpMatrix::identity();
    for i in 0..3 {
        f[(i, i + 3)] = dt;
    }
    f
}

/// Discrete white-noise-acceleration covariance for a `[p (3), v (3)]` block.
fn cv_process_noise(dt: f64, accel_std: f64) -> KpMatrix {
    let q = accel_std * accel_std;
    let mut m = KpMatrix::zeros();
    for i in 0..3 {
        m[(i, i)] = q * dt.powi(4) / 4.0;
        m[(i, i + 3)] = q * dt.powi(3) / 2.0;
        m[(i + 3, i)] = q * dt.powi(3) / 2.0;
        m[(i + 3, i + 3)] = q * dt * dt;
    }
    m
}

/// Constant-velocity prediction for position and keypoints, random walk on shape.
pub fn kalman_predict(x: &GaussianState, m: &MotionConfig) -> GaussianState {
    let cv = cv_transition(m.dt);
    let mut f = KsMatrix::identity();
    f.fixed_view_mut::<6, 6>(0, 0).copy_from(&cv);
    let mut q = KsMatrix::zeros();
    q.fixed_view_mut::<6, 6>(0, 0).copy_from(&cv_process_noise(m.dt, m.accel_noise));
    for i in 6..9 {
        q[(i, i)] = m.shape_noise * m.shape_noise;
    }

    let q_kp = cv_process_noise(m.dt, m.keypoint_accel_noise);
    let keypoints = x
        .keypoints
        .iter()
        .map(|k| KeypointGaussian { mean: cv * k.mean, cov: symmetrize(&(cv * k.cov * cv.transpose() + q_kp)) })
        .collect();

    GaussianState { mean: f * x.mean, cov: symmetrize(&(f * x.cov * f.transpose() + q)), keypoints }
}

/// Bounding box observation of a kinematic/shape vector.
pub fn observe_bbox(m: &Matrix3x4<f64>, x: &KsVector) -> Result<Vector4<f64>> {
    let e = Ellipsoid3D::new(x.fixed_rows::<3>(0).into_owned(), x.fixed_rows::<3>(6).into_owned());
    project_ellipsoid(m, &e).map(|b| b.0)
}

pub type BBoxPrediction = MeasurementPrediction<9, 4>;

/// UT prediction of the bounding box a track would produce on `cam`.
pub fn predict_measurement_ks(x: &GaussianState, cam: &CameraModel, cfg: &UtConfig) -> Result<BBoxPrediction> {
    let noise = SMatrix::<f64, 4, 4>::from_diagonal(cam.bbox_noise());
    let m = cam.projection();
    predict_measurement(&x.mean, &x.cov, &noise, cfg, |s| observe_bbox(m, s))
}

/// Kinematic/shape correction against bounding box `b`. Returns the
/// association likelihood q and the updated state; on a non-observable pair
/// or singular innovation the state comes back unchanged with q = 0.
pub fn ukf_update_ks(b: &BBox2D, x: &GaussianState, cam: &CameraModel, cfg: &UtConfig) -> (f64, GaussianState) {
    let Ok(pred) = predict_measurement_ks(x, cam, cfg) else {
        return (0.0, x.clone());
    };
    update_ks_with_prediction(b, x, &pred)
}

/// Same as [`ukf_update_ks`] with a precomputed measurement prediction.
pub fn update_ks_with_prediction(b: &BBox2D, x: &GaussianState, pred: &BBoxPrediction) -> (f64, GaussianState) {
    let Some(log_q) = log_gaussian_density(b.as_vector(), &pred.mean, &pred.innovation_cov) else {
        return (0.0, x.clone());
    };
    match ukf_correct(&x.mean, &x.cov, pred, b.as_vector()) {
        Ok((mean, cov)) => (log_q.exp(), GaussianState { mean, cov, keypoints: x.keypoints.clone() }),
        Err(_) => (0.0, x.clone()),
    }
}

/// Updates one keypoint block from a single pixel observation.
pub fn update_keypoint(
    k: &KeypointGaussian,
    observed: &Vector2<f64>,
    cam: &CameraModel,
    cfg: &UtConfig,
) -> Result<KeypointGaussian> {
    let noise = SMatrix::<f64, 2, 2>::from_diagonal(cam.keypoint_noise());
    let m = cam.projection();
    let pred = predict_measurement(&k.mean, &k.cov, &noise, cfg, |s| {
        project_point(m, &s.fixed_rows::<3>(0).into_owned())
    })?;
    let (mean, cov) = ukf_correct(&k.mean, &k.cov, &pred, observed)?;
    Ok(KeypointGaussian { mean, cov })
}

/// Independent per-keypoint UKF updates; invisible keypoints, and keypoints
/// whose update fails, are left untouched.
pub fn ukf_update_kp(keypoints: &[Keypoint2D], x: &GaussianState, cam: &CameraModel, cfg: &UtConfig) -> GaussianState {
    let mut out = x.clone();
    for (block, kp) in out.keypoints.iter_mut().zip(keypoints) {
        if !kp.visible {
            continue;
        }
        if let Ok(updated) = update_keypoint(block, &kp.position, cam, cfg) {
            *block = updated;
        }
    }
    out
}
