//! Camera projection math.
//!
//! Everything here works on homogeneous 3×4 projection matrices mapping world
//! meters to pixels. Bounding boxes use the `[left, top, log(width),
//! log(height)]` parameterization throughout; ellipsoids are axis aligned and
//! carry log half-lengths so that every real-valued shape vector is valid.

use nalgebra::{Matrix3, Matrix3x4, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum third homogeneous coordinate for a point to count as in front of the camera.
pub const DEPTH_EPS: f64 = 1e-9;
/// Determinant / dehomogenization scale below which a matrix or point is treated as singular.
pub const SINGULAR_EPS: f64 = 1e-12;

/// Columns of the projection matrix used for the z = 0 ground homography.
pub const GROUND_PLANE_COLUMNS: [usize; 3] = [0, 1, 3];

/// A calibrated camera.
///
/// The projection matrix is stored normalized: the rotation part of its third
/// row has unit norm and the left 3×3 block has positive determinant, so the
/// third homogeneous coordinate of a projected point is its metric depth.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub id: u32,
    projection: Matrix3x4<f64>,
    pub image_size: (f64, f64),
    bbox_noise: Vector4<f64>,
    keypoint_noise: Vector2<f64>,
    pub active: bool,
    ground_columns: [usize; 3],
    ground_inverse: Option<Matrix3<f64>>,
}

impl CameraModel {
    /// Builds a camera, checking rank and noise positivity. `bbox_noise` and
    /// `keypoint_noise` are the diagonals of R_b (px², px², log², log²) and R_k (px², px²).
    pub fn new(
        id: u32,
        projection: Matrix3x4<f64>,
        image_size: (f64, f64),
        bbox_noise: Vector4<f64>,
        keypoint_noise: Vector2<f64>,
    ) -> Result<Self> {
        Self::with_ground_columns(
            id,
            projection,
            image_size,
            bbox_noise,
            keypoint_noise,
            GROUND_PLANE_COLUMNS,
        )
    }

    pub fn with_ground_columns(
        id: u32,
        projection: Matrix3x4<f64>,
        image_size: (f64, f64),
        bbox_noise: Vector4<f64>,
        keypoint_noise: Vector2<f64>,
        ground_columns: [usize; 3],
    ) -> Result<Self> {
        if projection.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateCamera("non-finite projection matrix".into()));
        }
        let sv = projection.singular_values();
        let (max, min) = sv.iter().fold((0.0_f64, f64::INFINITY), |(hi, lo), &s| {
            (hi.max(s), lo.min(s))
        });
        if max <= 0.0 || min <= SINGULAR_EPS * max {
            return Err(Error::DegenerateCamera("projection matrix must have rank 3".into()));
        }
        if bbox_noise.iter().any(|v| !(*v > 0.0) || !v.is_finite())
            || keypoint_noise.iter().any(|v| !(*v > 0.0) || !v.is_finite())
        {
            return Err(Error::DegenerateCamera("noise variances must be strictly positive".into()));
        }
        if ground_columns.iter().any(|&c| c > 3) {
            return Err(Error::DegenerateCamera("ground column index out of range".into()));
        }
        if !(image_size.0 > 0.0 && image_size.1 > 0.0) {
            return Err(Error::DegenerateCamera("image size must be positive".into()));
        }

        let projection = normalize_projection(&projection);
        let ground = ground_homography(&projection, ground_columns);
        let ground_inverse = if ground.determinant().abs() > SINGULAR_EPS {
            ground.try_inverse()
        } else {
            None
        };

        Ok(Self {
            id,
            projection,
            image_size,
            bbox_noise,
            keypoint_noise,
            active: true,
            ground_columns,
            ground_inverse,
        })
    }

    /// Pinhole camera at `position` looking at `target` with +z world up.
    pub fn look_at(
        id: u32,
        position: Vector3<f64>,
        target: Vector3<f64>,
        focal_px: f64,
        image_size: (f64, f64),
        bbox_noise: Vector4<f64>,
        keypoint_noise: Vector2<f64>,
    ) -> Result<Self> {
        let forward = (target - position)
            .try_normalize(SINGULAR_EPS)
            .ok_or_else(|| Error::DegenerateCamera("camera target equals position".into()))?;
        let up = Vector3::z();
        let right = forward
            .cross(&up)
            .try_normalize(SINGULAR_EPS)
            .ok_or_else(|| Error::DegenerateCamera("camera looks straight up or down".into()))?;
        // image y grows downwards
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -rotation * position;
        let intrinsics = Matrix3::new(
            focal_px,
            0.0,
            image_size.0 / 2.0,
            0.0,
            focal_px,
            image_size.1 / 2.0,
            0.0,
            0.0,
            1.0,
        );
        let mut extrinsics = Matrix3x4::zeros();
        extrinsics.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation);
        extrinsics.set_column(3, &translation);
        Self::new(id, intrinsics * extrinsics, image_size, bbox_noise, keypoint_noise)
    }

    pub fn projection(&self) -> &Matrix3x4<f64> {
        &self.projection
    }

    /// Diagonal of R_b.
    pub fn bbox_noise(&self) -> &Vector4<f64> {
        &self.bbox_noise
    }

    /// Diagonal of R_k.
    pub fn keypoint_noise(&self) -> &Vector2<f64> {
        &self.keypoint_noise
    }

    pub fn ground_columns(&self) -> [usize; 3] {
        self.ground_columns
    }

    /// Whether a pixel lies inside the image bounds.
    pub fn contains_pixel(&self, px: &Vector2<f64>) -> bool {
        px.x >= 0.0 && px.y >= 0.0 && px.x < self.image_size.0 && px.y < self.image_size.1
    }
}

fn normalize_projection(m: &Matrix3x4<f64>) -> Matrix3x4<f64> {
    let left = m.fixed_view::<3, 3>(0, 0).into_owned();
    let sign = if left.determinant() < 0.0 { -1.0 } else { 1.0 };
    let norm = m.fixed_view::<1, 3>(2, 0).norm();
    if norm > SINGULAR_EPS {
        m * (sign / norm)
    } else {
        m * sign
    }
}

fn ground_homography(m: &Matrix3x4<f64>, cols: [usize; 3]) -> Matrix3<f64> {
    Matrix3::from_columns(&[m.column(cols[0]), m.column(cols[1]), m.column(cols[2])])
}

/// Axis-aligned 3D ellipsoid with log half-lengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid3D {
    pub center: Vector3<f64>,
    pub log_half_lengths: Vector3<f64>,
}

impl Ellipsoid3D {
    pub fn new(center: Vector3<f64>, log_half_lengths: Vector3<f64>) -> Self {
        Self { center, log_half_lengths }
    }

    pub fn half_lengths(&self) -> Vector3<f64> {
        self.log_half_lengths.map(f64::exp)
    }

    /// Circumscribing axis-aligned box `center ± exp(s)`.
    pub fn aabb(&self) -> Aabb3 {
        let h = self.half_lengths();
        Aabb3 { min: self.center - h, max: self.center + h }
    }

    /// The six points `center ± exp(s_i) e_i`.
    pub fn extreme_points(&self) -> [Vector3<f64>; 6] {
        let h = self.half_lengths();
        let c = self.center;
        [
            c + Vector3::new(h.x, 0.0, 0.0),
            c - Vector3::new(h.x, 0.0, 0.0),
            c + Vector3::new(0.0, h.y, 0.0),
            c - Vector3::new(0.0, h.y, 0.0),
            c + Vector3::new(0.0, 0.0, h.z),
            c - Vector3::new(0.0, 0.0, h.z),
        ]
    }
}

/// 2D bounding box `[left, top, log(width), log(height)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox2D(pub Vector4<f64>);

impl BBox2D {
    pub fn new(left: f64, top: f64, log_width: f64, log_height: f64) -> Self {
        Self(Vector4::new(left, top, log_width, log_height))
    }

    /// From pixel extents. Width and height must be positive.
    pub fn from_pixels(left: f64, top: f64, width: f64, height: f64) -> Self {
        Self::new(left, top, width.ln(), height.ln())
    }

    pub fn left(&self) -> f64 {
        self.0[0]
    }

    pub fn top(&self) -> f64 {
        self.0[1]
    }

    pub fn width(&self) -> f64 {
        self.0[2].exp()
    }

    pub fn height(&self) -> f64 {
        self.0[3].exp()
    }

    pub fn right(&self) -> f64 {
        self.left() + self.width()
    }

    pub fn bottom(&self) -> f64 {
        self.top() + self.height()
    }

    pub fn bottom_center(&self) -> Vector2<f64> {
        Vector2::new(self.left() + self.width() / 2.0, self.bottom())
    }

    pub fn center(&self) -> Vector2<f64> {
        Vector2::new(self.left() + self.width() / 2.0, self.top() + self.height() / 2.0)
    }

    pub fn as_vector(&self) -> &Vector4<f64> {
        &self.0
    }
}

/// Homogeneous projection of a world point to pixels.
pub fn project_point(m: &Matrix3x4<f64>, p: &Vector3<f64>) -> Result<Vector2<f64>> {
    let h = m * p.push(1.0);
    if !(h.z > DEPTH_EPS) {
        return Err(Error::BehindCamera { depth: h.z });
    }
    Ok(Vector2::new(h.x / h.z, h.y / h.z))
}

/// Projects the i-th 3D keypoint into the camera.
pub fn project_keypoint(p: &Vector3<f64>, cam: &CameraModel) -> Result<Vector2<f64>> {
    project_point(&cam.projection, p)
}

/// Approximate image of an ellipsoid: the box enclosing its six projected extreme points.
pub fn project_ellipsoid(m: &Matrix3x4<f64>, e: &Ellipsoid3D) -> Result<BBox2D> {
    let mut lo = Vector2::repeat(f64::INFINITY);
    let mut hi = Vector2::repeat(f64::NEG_INFINITY);
    for p in e.extreme_points() {
        let px = project_point(m, &p)?;
        lo = lo.inf(&px);
        hi = hi.sup(&px);
    }
    let (w, h) = (hi.x - lo.x, hi.y - lo.y);
    if !(w > 0.0 && h > 0.0) || !w.is_finite() || !h.is_finite() {
        return Err(Error::DegenerateProjection);
    }
    Ok(BBox2D::new(lo.x, lo.y, w.ln(), h.ln()))
}

pub fn project_ellipsoid_to_bbox(e: &Ellipsoid3D, cam: &CameraModel) -> Result<BBox2D> {
    project_ellipsoid(&cam.projection, e)
}

/// Back-projects the bottom-center of a box onto the z = 0 ground plane.
pub fn bbox_bottom_to_ground(b: &BBox2D, cam: &CameraModel) -> Result<Vector2<f64>> {
    let inverse = cam
        .ground_inverse
        .as_ref()
        .ok_or_else(|| Error::DegenerateCamera("ground homography is singular".into()))?;
    let u = b.bottom_center();
    let g = inverse * Vector3::new(u.x, u.y, 1.0);
    if !(g.z.abs() >= SINGULAR_EPS) {
        return Err(Error::PointAtInfinity);
    }
    let ground = Vector2::new(g.x / g.z, g.y / g.z);
    if cam.ground_columns == GROUND_PLANE_COLUMNS {
        // pixels above the horizon land behind the camera
        let depth = cam.projection.row(2).dot(&nalgebra::RowVector4::new(ground.x, ground.y, 0.0, 1.0));
        if !(depth > DEPTH_EPS) {
            return Err(Error::BehindCamera { depth });
        }
    }
    Ok(ground)
}

/// Axis-aligned 3D box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb3 {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb3 {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Self { min, max }
    }

    pub fn volume(&self) -> f64 {
        let d = self.max - self.min;
        d.x.max(0.0) * d.y.max(0.0) * d.z.max(0.0)
    }

    fn check(&self) -> Result<()> {
        let d = self.max - self.min;
        if d.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::DegenerateBox)
        }
    }
}

fn overlap_volumes(a: &Aabb3, b: &Aabb3) -> (f64, f64, f64) {
    let inter = Aabb3::new(a.min.sup(&b.min), a.max.inf(&b.max)).volume();
    let hull = Aabb3::new(a.min.inf(&b.min), a.max.sup(&b.max)).volume();
    let union = a.volume() + b.volume() - inter;
    (inter, union, hull)
}

pub fn iou3d(a: &Aabb3, b: &Aabb3) -> Result<f64> {
    a.check()?;
    b.check()?;
    let (inter, union, _) = overlap_volumes(a, b);
    Ok((inter / union).clamp(0.0, 1.0))
}

/// Generalized IoU: IoU minus the fraction of the enclosing box not covered by the union.
pub fn giou3d(a: &Aabb3, b: &Aabb3) -> Result<f64> {
    a.check()?;
    b.check()?;
    let (inter, union, hull) = overlap_volumes(a, b);
    Ok(inter / union - (hull - union) / hull)
}

/// `(1 - GIoU) / 2`, in `[0, 1)`.
pub fn giou3d_distance(a: &Aabb3, b: &Aabb3) -> Result<f64> {
    Ok((1.0 - giou3d(a, b)?) / 2.0)
}

/// Calibration record as stored on disk: row-major 3×4 matrix, image size and noise diagonals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub id: u32,
    pub matrix: [f64; 12],
    pub image_size: [f64; 2],
    pub bbox_noise: [f64; 4],
    pub keypoint_noise: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_columns: Option<[usize; 3]>,
}

impl TryFrom<&CameraRecord> for CameraModel {
    type Error = Error;

    fn try_from(r: &CameraRecord) -> Result<Self> {
        CameraModel::with_ground_columns(
            r.id,
            Matrix3x4::from_row_slice(&r.matrix),
            (r.image_size[0], r.image_size[1]),
            Vector4::from(r.bbox_noise),
            Vector2::from(r.keypoint_noise),
            r.ground_columns.unwrap_or(GROUND_PLANE_COLUMNS),
        )
    }
}

impl From<&CameraModel> for CameraRecord {
    fn from(c: &CameraModel) -> Self {
        let mut matrix = [0.0; 12];
        for r in 0..3 {
            for col in 0..4 {
                matrix[r * 4 + col] = c.projection[(r, col)];
            }
        }
        Self {
            id: c.id,
            matrix,
            image_size: [c.image_size.0, c.image_size.1],
            bbox_noise: c.bbox_noise.into(),
            keypoint_noise: c.keypoint_noise.into(),
            ground_columns: (c.ground_columns != GROUND_PLANE_COLUMNS).then_some(c.ground_columns),
        }
    }
}
