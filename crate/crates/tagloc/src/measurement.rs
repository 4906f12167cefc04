//! Tag measurement models: complete-pose conversion, residual screening with
//! soft abandon, the adaptive noise model, and the distance-only local
//! linearization.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix3, RowVector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{angle_diff, robot_pose_from_tag_detection, Pose2};
use crate::split_cif::SplitNoise;
use crate::{Error, Result};

/// Registry of tag id -> globally registered planar pose.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TagMap {
    pub entries: BTreeMap<u32, Pose2>,
}

impl TagMap {
    pub fn get(&self, tag_id: u32) -> Result<&Pose2> {
        self.entries.get(&tag_id).ok_or(Error::UnknownTag(tag_id))
    }
}

/// Detection payload: a full relative pose or a bare range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MeasurementPayload {
    Complete { pose_in_camera: Pose2 },
    DistanceOnly { range: f64 },
}

/// One tag detection, stamped with its emission epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TagMeasurement {
    pub tag_id: u32,
    pub stamp: u64,
    pub payload: MeasurementPayload,
    /// View distance L, meters.
    pub view_distance: f64,
    /// View angle alpha between camera axis and tag normal, radians (0, pi/2].
    pub view_angle: f64,
}

/// Outcome of measurement screening.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScreeningDecision {
    Accept,
    /// Kept, but fused with the adaptive (inflated) noise model.
    SoftAccept,
    Discard,
}

/// Screening thresholds and the weight converting the heading residual to
/// meters inside the residual norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenConfig {
    /// Below this residual the measurement is accepted with nominal noise.
    pub soft_threshold: f64,
    /// Above this residual the measurement is discarded outright.
    pub hard_threshold: f64,
    /// Meters per radian applied to the heading residual.
    pub angle_weight: f64,
}

impl Default for ScreenConfig {
    fn default() -> Self {
        Self {
            soft_threshold: 0.5,
            hard_threshold: 3.0,
            angle_weight: 1.0,
        }
    }
}

/// Knobs for the adaptive noise model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveNoiseConfig {
    /// Weight on the heading diagonal relative to the position diagonals.
    pub theta_weight: f64,
    /// Fraction of the adaptive covariance booked as dependent.
    pub dep_fraction: f64,
    /// Diagonal floor, keeps R positive at zero residual.
    pub r_min: f64,
    /// Residual norm uses the same heading-to-meters weight as screening.
    pub angle_weight: f64,
}

impl Default for AdaptiveNoiseConfig {
    fn default() -> Self {
        Self {
            theta_weight: 1.0,
            dep_fraction: 0.0,
            r_min: 1e-4,
            angle_weight: 1.0,
        }
    }
}

/// Convert a complete detection into a global-pose measurement vector with
/// H = I3.
pub fn complete_measurement(
    meas: &TagMeasurement,
    map: &TagMap,
    extrinsics: &Pose2,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let MeasurementPayload::Complete { pose_in_camera } = meas.payload else {
        return Err(Error::NotInitializable);
    };
    let tag_global = map.get(meas.tag_id)?;
    let robot = robot_pose_from_tag_detection(tag_global, &pose_in_camera, extrinsics);
    Ok((
        DVector::from_row_slice(&[robot.x, robot.y, robot.theta]),
        DMatrix::from_iterator(3, 3, Matrix3::<f64>::identity().iter().cloned()),
    ))
}

/// Weighted residual norm between the predicted pose and a pose measurement.
pub fn residual_norm(predicted: &Pose2, z: &DVector<f64>, angle_weight: f64) -> f64 {
    let dx = z[0] - predicted.x;
    let dy = z[1] - predicted.y;
    let dth = angle_diff(z[2], predicted.theta) * angle_weight;
    (dx * dx + dy * dy + dth * dth).sqrt()
}

/// Two-threshold screening: discard far outliers, soft-accept suspicious
/// measurements for the adaptive noise model.
pub fn screen(predicted: &Pose2, z: &DVector<f64>, cfg: &ScreenConfig) -> ScreeningDecision {
    let d = residual_norm(predicted, z, cfg.angle_weight);
    if d > cfg.hard_threshold {
        ScreeningDecision::Discard
    } else if d > cfg.soft_threshold {
        ScreeningDecision::SoftAccept
    } else {
        ScreeningDecision::Accept
    }
}

/// Adaptive measurement noise: scale 0.25 * (L / alpha^2) * ||residual||,
/// promoted to a diagonal 3x3 with a configurable heading weight and floor.
pub fn adaptive_noise(
    predicted: &Pose2,
    z: &DVector<f64>,
    view_distance: f64,
    view_angle: f64,
    cfg: &AdaptiveNoiseConfig,
) -> SplitNoise {
    let resid = residual_norm(predicted, z, cfg.angle_weight);
    let s = 0.25 * (view_distance / (view_angle * view_angle)) * resid;
    let mut r = DMatrix::<f64>::zeros(3, 3);
    r[(0, 0)] = s + cfg.r_min;
    r[(1, 1)] = s + cfg.r_min;
    r[(2, 2)] = s * cfg.theta_weight + cfg.r_min;
    let r_dep = &r * cfg.dep_fraction;
    let r_ind = &r * (1.0 - cfg.dep_fraction);
    SplitNoise { r_ind, r_dep }
}

/// Minimum predicted-to-tag distance for the range linearization.
pub const DEFAULT_MIN_RANGE: f64 = 0.1;

/// Locally linearized range measurement about the predicted position.
///
/// Returns the measurement row [C S 0] and the shifted scalar measurement
/// z_tilde = z - D + C * x_pred + S * y_pred.
pub fn linearize_distance(
    predicted: &Pose2,
    tag_xy: (f64, f64),
    z_range: f64,
    min_range: f64,
) -> Result<(RowVector3<f64>, f64)> {
    let dx = predicted.x - tag_xy.0;
    let dy = predicted.y - tag_xy.1;
    let d = (dx * dx + dy * dy).sqrt();
    if d < min_range {
        return Err(Error::RangeSingularity {
            dist: d,
            min: min_range,
        });
    }
    let c = dx / d;
    let s = dy / d;
    let z_tilde = z_range - d + c * predicted.x + s * predicted.y;
    Ok((RowVector3::new(c, s, 0.0), z_tilde))
}
