//! Upright standing skeleton templates for the supported keypoint conventions.
//!
//! Template coordinates are meters in a person-local frame (x to the right,
//! y forward, z up from the ground) for a person whose circumscribing
//! ellipsoid has half-lengths (0.3, 0.3, 0.9). [`pose`] rescales them to the
//! actual half-lengths, rotates them to a heading and optionally applies a
//! sinusoidal walking swing.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeypointConvention {
    /// 15 joints, OpenPose MPI ordering.
    #[default]
    Mpii15,
    /// 18 joints, OpenPose COCO ordering.
    Coco18,
    /// 25 joints, OpenPose BODY_25 ordering.
    Body25,
}

const TEMPLATE_HALF_LENGTHS: [f64; 3] = [0.3, 0.3, 0.9];

/// Which limb a joint belongs to and how far along it the joint sits.
#[derive(Debug, Clone, Copy)]
enum Limb {
    Torso,
    Arm { side: f64, reach: f64 },
    Leg { side: f64, reach: f64 },
}

const R: f64 = 1.0;
const L: f64 = -1.0;

type Joint = ([f64; 3], Limb);

const NECK: Joint = ([0.0, 0.0, 1.50], Limb::Torso);
const R_SHOULDER: Joint = ([0.18, 0.0, 1.45], Limb::Torso);
const R_ELBOW: Joint = ([0.22, 0.0, 1.18], Limb::Arm { side: R, reach: 0.5 });
const R_WRIST: Joint = ([0.24, 0.0, 0.92], Limb::Arm { side: R, reach: 1.0 });
const L_SHOULDER: Joint = ([-0.18, 0.0, 1.45], Limb::Torso);
const L_ELBOW: Joint = ([-0.22, 0.0, 1.18], Limb::Arm { side: L, reach: 0.5 });
const L_WRIST: Joint = ([-0.24, 0.0, 0.92], Limb::Arm { side: L, reach: 1.0 });
const R_HIP: Joint = ([0.10, 0.0, 0.95], Limb::Torso);
const R_KNEE: Joint = ([0.11, 0.02, 0.52], Limb::Leg { side: R, reach: 0.5 });
const R_ANKLE: Joint = ([0.11, 0.0, 0.08], Limb::Leg { side: R, reach: 1.0 });
const L_HIP: Joint = ([-0.10, 0.0, 0.95], Limb::Torso);
const L_KNEE: Joint = ([-0.11, 0.02, 0.52], Limb::Leg { side: L, reach: 0.5 });
const L_ANKLE: Joint = ([-0.11, 0.0, 0.08], Limb::Leg { side: L, reach: 1.0 });
const NOSE: Joint = ([0.0, 0.09, 1.62], Limb::Torso);
const R_EYE: Joint = ([0.03, 0.08, 1.66], Limb::Torso);
const L_EYE: Joint = ([-0.03, 0.08, 1.66], Limb::Torso);
const R_EAR: Joint = ([0.07, 0.0, 1.64], Limb::Torso);
const L_EAR: Joint = ([-0.07, 0.0, 1.64], Limb::Torso);

const MPII15: [Joint; 15] = [
    ([0.0, 0.0, 1.72], Limb::Torso), // head top
    NECK,
    R_SHOULDER,
    R_ELBOW,
    R_WRIST,
    L_SHOULDER,
    L_ELBOW,
    L_WRIST,
    R_HIP,
    R_KNEE,
    R_ANKLE,
    L_HIP,
    L_KNEE,
    L_ANKLE,
    ([0.0, 0.0, 1.25], Limb::Torso), // chest
];

const COCO18: [Joint; 18] = [
    NOSE, NECK, R_SHOULDER, R_ELBOW, R_WRIST, L_SHOULDER, L_ELBOW, L_WRIST, R_HIP, R_KNEE, R_ANKLE, L_HIP, L_KNEE,
    L_ANKLE, R_EYE, L_EYE, R_EAR, L_EAR,
];

const BODY25: [Joint; 25] = [
    NOSE,
    NECK,
    R_SHOULDER,
    R_ELBOW,
    R_WRIST,
    L_SHOULDER,
    L_ELBOW,
    L_WRIST,
    ([0.0, 0.0, 0.95], Limb::Torso), // mid hip
    R_HIP,
    R_KNEE,
    R_ANKLE,
    L_HIP,
    L_KNEE,
    L_ANKLE,
    R_EYE,
    L_EYE,
    R_EAR,
    L_EAR,
    ([-0.11, 0.15, 0.02], Limb::Leg { side: L, reach: 1.0 }), // big toe
    ([-0.15, 0.12, 0.02], Limb::Leg { side: L, reach: 1.0 }), // small toe
    ([-0.11, -0.05, 0.03], Limb::Leg { side: L, reach: 1.0 }), // heel
    ([0.11, 0.15, 0.02], Limb::Leg { side: R, reach: 1.0 }),
    ([0.15, 0.12, 0.02], Limb::Leg { side: R, reach: 1.0 }),
    ([0.11, -0.05, 0.03], Limb::Leg { side: R, reach: 1.0 }),
];

impl KeypointConvention {
    pub fn from_count(count: usize) -> Result<Self> {
        match count {
            15 => Ok(Self::Mpii15),
            18 => Ok(Self::Coco18),
            25 => Ok(Self::Body25),
            other => Err(Error::InvalidConfig(format!("unsupported keypoint count {other}, expected 15, 18 or 25"))),
        }
    }

    pub fn count(self) -> usize {
        self.joints().len()
    }

    fn joints(self) -> &'static [Joint] {
        match self {
            Self::Mpii15 => &MPII15,
            Self::Coco18 => &COCO18,
            Self::Body25 => &BODY25,
        }
    }
}

/// Walking swing applied on top of the standing template.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Gait {
    /// Gait phase in radians.
    pub phase: f64,
    /// Forward displacement of the feet at full swing, meters.
    pub amplitude: f64,
}

/// Keypoints of a person standing on `ground` facing `heading` (radians from +y towards −x).
pub fn pose(
    convention: KeypointConvention,
    ground: Vector2<f64>,
    half_lengths: &Vector3<f64>,
    heading: f64,
    gait: Gait,
) -> Vec<Vector3<f64>> {
    let scale = Vector3::new(
        half_lengths.x / TEMPLATE_HALF_LENGTHS[0],
        half_lengths.y / TEMPLATE_HALF_LENGTHS[1],
        half_lengths.z / TEMPLATE_HALF_LENGTHS[2],
    );
    let (sin_h, cos_h) = heading.sin_cos();
    let swing = gait.amplitude * gait.phase.sin();
    // feet lift while passing under the body
    let lift = 0.25 * gait.amplitude * gait.phase.cos().abs();
    convention
        .joints()
        .iter()
        .map(|(xyz, limb)| {
            let mut local = Vector3::new(xyz[0], xyz[1], xyz[2]);
            match *limb {
                Limb::Torso => {}
                Limb::Leg { side, reach } => {
                    local.y += side * swing * reach;
                    local.z += reach * lift * (1.0 + side * gait.phase.cos().signum()) / 2.0;
                }
                // arms swing against the leg on the same side, at reduced amplitude
                Limb::Arm { side, reach } => local.y -= 0.6 * side * swing * reach,
            }
            let scaled = local.component_mul(&scale);
            Vector3::new(
                ground.x + cos_h * scaled.x - sin_h * scaled.y,
                ground.y + sin_h * scaled.x + cos_h * scaled.y,
                scaled.z,
            )
        })
        .collect()
}

/// Standing upright template at `ground`, facing +y.
pub fn standing_pose(convention: KeypointConvention, ground: Vector2<f64>, half_lengths: &Vector3<f64>) -> Vec<Vector3<f64>> {
    pose(convention, ground, half_lengths, 0.0, Gait::default())
}
