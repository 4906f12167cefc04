//! Deterministic warehouse scenario generator: ground-truth trajectories,
//! tag layouts, and measurement streams with distance/angle-dependent noise,
//! temporal correlation, outliers, distance-only degradations, delays, and
//! kidnap events. Everything is a pure function of the scenario (seed
//! included), so repeated runs are bit-identical.

pub mod presets;
mod runner;

pub use runner::{run_method, FilterParams, Method, RunRecord, METHOD_NAMES};

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::{angle_diff, Pose2};
use crate::measurement::{MeasurementPayload, TagMap, TagMeasurement};
use crate::motion_model::{self, Control};
use crate::{Error, Result};

/// Sensor behaviour: field of view, noise growth with view distance L and
/// view angle alpha, AR(1) temporal correlation, degradation to
/// distance-only, and outliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub fov_half_angle: f64,
    pub max_range: f64,
    pub base_sigma_xy: f64,
    pub base_sigma_theta: f64,
    /// Noise growth coefficient in L: sigma *= 1 + growth_l * L.
    pub growth_l: f64,
    /// Noise growth coefficient in alpha: sigma *= 1 + growth_alpha * alpha.
    pub growth_alpha: f64,
    /// Lag-1 correlation of the measurement noise process, in [0, 1).
    pub ar1_rho: f64,
    /// Probability a detection degrades to distance-only:
    /// clamp(partial_base + partial_growth_l * L + partial_growth_alpha * alpha).
    pub partial_base: f64,
    pub partial_growth_l: f64,
    pub partial_growth_alpha: f64,
    /// Std of the range noise on distance-only detections.
    pub range_sigma: f64,
    pub outlier_rate: f64,
    /// Position offset magnitude applied to outlier detections, meters.
    pub outlier_magnitude: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            fov_half_angle: 1.0,
            max_range: 8.0,
            base_sigma_xy: 0.03,
            base_sigma_theta: 0.02,
            growth_l: 0.0,
            growth_alpha: 0.0,
            ar1_rho: 0.0,
            partial_base: 0.0,
            partial_growth_l: 0.0,
            partial_growth_alpha: 0.0,
            range_sigma: 0.05,
            outlier_rate: 0.0,
            outlier_magnitude: 2.0,
        }
    }
}

/// Timed scenario events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Event {
    /// Instantaneous unmodeled offset of the true pose.
    Kidnap { epoch: u64, offset: [f64; 3] },
    /// Measurements emitted in [start, end] are delivered `delay` epochs late.
    DelayWindow { start: u64, end: u64, delay: u64 },
    /// Outlier rate override in [start, end].
    OutlierBurst { start: u64, end: u64, rate: f64 },
}

/// Waypoint-following controller limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    /// Nominal speed, m/s.
    pub speed: f64,
    /// Maximum yaw rate, rad/s.
    pub max_turn_rate: f64,
    /// A waypoint counts as reached inside this radius, meters.
    pub waypoint_tolerance: f64,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            speed: 1.0,
            max_turn_rate: 1.0,
            waypoint_tolerance: 0.3,
        }
    }
}

/// Full scenario description; deterministic given the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub duration_epochs: u64,
    pub dt: f64,
    pub waypoints: Vec<Pose2>,
    pub tag_layout: TagMap,
    pub sensor: SensorModel,
    #[serde(default)]
    pub events: Vec<Event>,
    pub drive: DriveConfig,
    /// Std of the noise injected into the odometry readings (dd, dth).
    pub odom_sigma_d: f64,
    pub odom_sigma_theta: f64,
    pub filter: FilterParams,
}

/// Ground truth: poses 0..=N and the exact controls that generate them.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub poses: Vec<Pose2>,
    pub controls: Vec<Control>,
}

/// A measurement together with the epoch at which the filter receives it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeliveredMeasurement {
    pub delivery: u64,
    pub meas: TagMeasurement,
}

/// Sample statistics recorded while synthesizing, for the statistical checks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StreamDiagnostics {
    /// Injected x-noise of each complete detection, in emission order.
    pub noise_x: Vec<f64>,
    pub outlier_count: usize,
    pub partial_count: usize,
    pub detection_count: usize,
}

/// Noisy odometry plus the delivered measurement stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub odometry: Vec<Control>,
    /// Sorted by delivery epoch, then stamp, then tag id.
    pub measurements: Vec<DeliveredMeasurement>,
    pub diagnostics: StreamDiagnostics,
}

/// Camera mounting pose in the robot frame shared by simulator and filter.
pub fn camera_extrinsics(params: &FilterParams) -> Pose2 {
    Pose2::new(params.extrinsics[0], params.extrinsics[1], params.extrinsics[2])
}

/// Visibility test: returns (view distance L, view angle alpha) when the tag
/// is inside the field of view, within range, and facing the camera.
pub fn visibility(sensor: &SensorModel, camera: &Pose2, tag: &Pose2) -> Option<(f64, f64)> {
    let rel = camera.inverse().compose(tag);
    let l = (rel.x * rel.x + rel.y * rel.y).sqrt();
    if l > sensor.max_range || l < 1e-6 {
        return None;
    }
    let bearing = rel.y.atan2(rel.x);
    if bearing.abs() > sensor.fov_half_angle {
        return None;
    }
    // View angle between the tag normal and the tag-to-camera direction.
    let vx = camera.x - tag.x;
    let vy = camera.y - tag.y;
    let alpha = angle_diff(vy.atan2(vx), tag.theta).abs();
    if alpha >= PI / 2.0 {
        return None;
    }
    Some((l, alpha.max(0.05)))
}

/// Generate the ground-truth trajectory: a waypoint follower under the
/// forklift kinematics. Controls are exact; replaying them through the
/// motion model reproduces the poses (kidnap jumps excepted).
pub fn generate_truth(s: &Scenario) -> Result<Truth> {
    if s.waypoints.len() < 2 {
        return Err(Error::TooFewWaypoints(s.waypoints.len()));
    }
    let mut poses = Vec::with_capacity(s.duration_epochs as usize + 1);
    let mut controls = Vec::with_capacity(s.duration_epochs as usize);
    let mut pose = s.waypoints[0];
    poses.push(pose);
    let mut wp_idx = 1usize;
    let mut best_dist = f64::INFINITY;
    let mut stall = 0u32;
    const STALL_LIMIT: u32 = 400;

    for k in 1..=s.duration_epochs {
        let target = s.waypoints[wp_idx];
        let dist = pose.position_distance(&target);
        if dist < best_dist - 1e-4 || dist < s.drive.waypoint_tolerance {
            best_dist = dist;
            stall = 0;
        } else {
            stall += 1;
            if stall > STALL_LIMIT {
                return Err(Error::UnreachableWaypoint { index: wp_idx });
            }
        }
        if dist < s.drive.waypoint_tolerance && wp_idx + 1 < s.waypoints.len() {
            wp_idx += 1;
            best_dist = f64::INFINITY;
            stall = 0;
        }
        let target = s.waypoints[wp_idx];
        let dist = pose.position_distance(&target);
        let u = if dist < s.drive.waypoint_tolerance && wp_idx + 1 == s.waypoints.len() {
            Control::zero(s.dt)
        } else {
            let heading_to = (target.y - pose.y).atan2(target.x - pose.x);
            let err = angle_diff(heading_to, pose.theta);
            let max_dth = s.drive.max_turn_rate * s.dt;
            let dth = err.clamp(-max_dth, max_dth);
            // Slow down while the heading error is large.
            let dd = (s.drive.speed * s.dt * err.cos().max(0.0)).min(dist);
            Control {
                delta_d: dd,
                delta_theta: dth,
                beta: 0.0,
                dt: s.dt,
            }
        };
        pose = motion_model::evolve(&pose, &u);
        for ev in &s.events {
            if let Event::Kidnap { epoch, offset } = ev {
                if *epoch == k {
                    pose = Pose2::new(pose.x + offset[0], pose.y + offset[1], pose.theta + offset[2]);
                }
            }
        }
        controls.push(u);
        poses.push(pose);
    }
    Ok(Truth { poses, controls })
}

fn delay_at(events: &[Event], stamp: u64) -> u64 {
    for ev in events {
        if let Event::DelayWindow { start, end, delay } = ev {
            if stamp >= *start && stamp <= *end {
                return *delay;
            }
        }
    }
    0
}

fn outlier_rate_at(events: &[Event], base: f64, stamp: u64) -> f64 {
    for ev in events {
        if let Event::OutlierBurst { start, end, rate } = ev {
            if stamp >= *start && stamp <= *end {
                return *rate;
            }
        }
    }
    base
}

/// AR(1) process with unit stationary variance.
struct Ar1 {
    value: f64,
    rho: f64,
    innov_scale: f64,
}

impl Ar1 {
    fn new(rho: f64, rng: &mut ChaCha8Rng) -> Self {
        let v: f64 = StandardNormal.sample(rng);
        Self {
            value: v,
            rho,
            innov_scale: (1.0 - rho * rho).sqrt(),
        }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let w: f64 = StandardNormal.sample(rng);
        self.value = self.rho * self.value + self.innov_scale * w;
        self.value
    }
}

/// Synthesize noisy odometry readings and the delivered measurement stream.
pub fn synthesize_stream(s: &Scenario, truth: &Truth) -> Stream {
    let mut odo_rng = ChaCha8Rng::seed_from_u64(s.seed.wrapping_mul(0x9e37_79b9).wrapping_add(1));
    let mut meas_rng = ChaCha8Rng::seed_from_u64(s.seed.wrapping_mul(0x85eb_ca6b).wrapping_add(2));

    let odometry: Vec<Control> = truth
        .controls
        .iter()
        .map(|u| {
            let nd = if s.odom_sigma_d > 0.0 {
                Normal::new(0.0, s.odom_sigma_d).unwrap().sample(&mut odo_rng)
            } else {
                0.0
            };
            let nth = if s.odom_sigma_theta > 0.0 {
                Normal::new(0.0, s.odom_sigma_theta).unwrap().sample(&mut odo_rng)
            } else {
                0.0
            };
            Control {
                delta_d: u.delta_d + nd,
                delta_theta: u.delta_theta + nth,
                ..*u
            }
        })
        .collect();

    let extrinsics = camera_extrinsics(&s.filter);
    let mut ar = [
        Ar1::new(s.sensor.ar1_rho, &mut meas_rng),
        Ar1::new(s.sensor.ar1_rho, &mut meas_rng),
        Ar1::new(s.sensor.ar1_rho, &mut meas_rng),
    ];
    let mut measurements = Vec::new();
    let mut diagnostics = StreamDiagnostics::default();

    for k in 1..=s.duration_epochs {
        let robot = truth.poses[k as usize];
        let camera = robot.compose(&extrinsics);
        for (&tag_id, tag) in &s.tag_layout.entries {
            let Some((l, alpha)) = visibility(&s.sensor, &camera, tag) else {
                continue;
            };
            diagnostics.detection_count += 1;
            let u_partial: f64 = meas_rng.gen();
            let u_outlier: f64 = meas_rng.gen();
            let e = [
                ar[0].next(&mut meas_rng),
                ar[1].next(&mut meas_rng),
                ar[2].next(&mut meas_rng),
            ];
            let range_noise: f64 = StandardNormal.sample(&mut meas_rng);
            let outlier_dir: f64 = meas_rng.gen_range(0.0..2.0 * PI);

            let p_partial = (s.sensor.partial_base
                + s.sensor.partial_growth_l * l
                + s.sensor.partial_growth_alpha * alpha)
                .clamp(0.0, 1.0);
            let rate = outlier_rate_at(&s.events, s.sensor.outlier_rate, k);

            let payload = if u_partial < p_partial {
                diagnostics.partial_count += 1;
                // Range reads are modeled from the robot origin, matching the
                // filter's range linearization.
                let d = robot.position_distance(tag);
                MeasurementPayload::DistanceOnly {
                    range: (d + s.sensor.range_sigma * range_noise).max(1e-3),
                }
            } else {
                let growth = (1.0 + s.sensor.growth_l * l) * (1.0 + s.sensor.growth_alpha * alpha);
                let sigma_xy = s.sensor.base_sigma_xy * growth;
                let sigma_th = s.sensor.base_sigma_theta * growth;
                let rel = camera.inverse().compose(tag);
                let mut x = rel.x + sigma_xy * e[0];
                let mut y = rel.y + sigma_xy * e[1];
                let th = rel.theta + sigma_th * e[2];
                let is_outlier = u_outlier < rate;
                if is_outlier {
                    diagnostics.outlier_count += 1;
                    x += s.sensor.outlier_magnitude * outlier_dir.cos();
                    y += s.sensor.outlier_magnitude * outlier_dir.sin();
                }
                diagnostics.noise_x.push(sigma_xy * e[0]);
                MeasurementPayload::Complete {
                    pose_in_camera: Pose2::new(x, y, th),
                }
            };
            let delivery = k + delay_at(&s.events, k);
            if delivery > s.duration_epochs {
                continue;
            }
            measurements.push(DeliveredMeasurement {
                delivery,
                meas: TagMeasurement {
                    tag_id,
                    stamp: k,
                    payload,
                    view_distance: l,
                    view_angle: alpha,
                },
            });
        }
    }
    measurements.sort_by_key(|m| (m.delivery, m.meas.stamp, m.meas.tag_id));
    Stream {
        odometry,
        measurements,
        diagnostics,
    }
}
