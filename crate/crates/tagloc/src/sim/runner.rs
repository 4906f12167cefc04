//! Execution of the comparative localization methods over a synthesized
//! stream. Each run is a pure function of (scenario, truth, stream), so the
//! harness can farm runs out to any number of threads without changing the
//! results.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::delay::HistoryBuffer;
use crate::geometry::{CovMatrix3, Pose2};
use crate::initializer::{InitConfig, KidnapMonitor};
use crate::measurement::{
    adaptive_noise, complete_measurement, linearize_distance, residual_norm, screen,
    AdaptiveNoiseConfig, MeasurementPayload, ScreenConfig, ScreeningDecision, TagMeasurement,
};
use crate::motion_model::{Control, ProcessNoiseConfig};
use crate::split_cif::{self, SplitNoise, SplitState};
use crate::{Error, Result};

use super::{camera_extrinsics, Scenario, Stream};

/// Comparative localization methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    TagSlam,
    EkfFull,
    ScifNonMa,
    ScifNonP,
    ScifNonBp,
    ScifFull,
}

pub const METHOD_NAMES: [&str; 6] = [
    "TagSLAM",
    "EKF-Full",
    "SCIF-nonMA",
    "SCIF-nonP",
    "SCIF-nonBP",
    "SCIF-Full",
];

impl Method {
    pub fn all() -> [Method; 6] {
        [
            Method::TagSlam,
            Method::EkfFull,
            Method::ScifNonMa,
            Method::ScifNonP,
            Method::ScifNonBp,
            Method::ScifFull,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::TagSlam => "TagSLAM",
            Method::EkfFull => "EKF-Full",
            Method::ScifNonMa => "SCIF-nonMA",
            Method::ScifNonP => "SCIF-nonP",
            Method::ScifNonBp => "SCIF-nonBP",
            Method::ScifFull => "SCIF-Full",
        }
    }

    fn flags(&self) -> MethodFlags {
        match self {
            Method::TagSlam => MethodFlags {
                fuse_motion: false,
                split: false,
                adaptive: false,
                use_partial: false,
                back_project: false,
            },
            Method::EkfFull => MethodFlags {
                fuse_motion: true,
                split: false,
                adaptive: true,
                use_partial: true,
                back_project: true,
            },
            Method::ScifNonMa => MethodFlags {
                fuse_motion: true,
                split: true,
                adaptive: false,
                use_partial: true,
                back_project: true,
            },
            Method::ScifNonP => MethodFlags {
                fuse_motion: true,
                split: true,
                adaptive: true,
                use_partial: false,
                back_project: true,
            },
            Method::ScifNonBp => MethodFlags {
                fuse_motion: true,
                split: true,
                adaptive: true,
                use_partial: true,
                back_project: false,
            },
            Method::ScifFull => MethodFlags {
                fuse_motion: true,
                split: true,
                adaptive: true,
                use_partial: true,
                back_project: true,
            },
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "TagSLAM" => Ok(Method::TagSlam),
            "EKF-Full" => Ok(Method::EkfFull),
            "SCIF-nonMA" => Ok(Method::ScifNonMa),
            "SCIF-nonP" => Ok(Method::ScifNonP),
            "SCIF-nonBP" => Ok(Method::ScifNonBp),
            "SCIF-Full" => Ok(Method::ScifFull),
            other => Err(Error::UnknownMethod(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct MethodFlags {
    fuse_motion: bool,
    /// false: dependent parts forced to zero (plain EKF behaviour).
    split: bool,
    /// false: hard screening only, nominal noise always.
    adaptive: bool,
    use_partial: bool,
    back_project: bool,
}

/// Filter-side knobs shared by all fusion methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    /// Camera pose in the robot frame (x, y, theta).
    pub extrinsics: [f64; 3],
    /// Filter's model of the odometry noise.
    pub q_sigma_d: f64,
    pub q_sigma_theta: f64,
    /// Diagonal of the additive prediction-model error floor.
    pub p_pre_diag: f64,
    pub soft_threshold: f64,
    pub hard_threshold: f64,
    pub angle_weight: f64,
    /// Heading weight inside the adaptive noise diagonal.
    pub theta_weight: f64,
    pub r_min: f64,
    /// Nominal complete-measurement noise.
    pub nominal_sigma_xy: f64,
    pub nominal_sigma_theta: f64,
    /// Range noise std for distance-only updates.
    pub range_sigma: f64,
    /// Fraction of the measurement covariance booked as dependent for the
    /// split methods (the correlated share).
    pub dep_share: f64,
    /// Initial covariance diagonal (x, y, theta).
    pub p0_diag: [f64; 3],
    /// Consecutive discards that trigger re-initialization.
    pub kidnap_limit: usize,
    pub history_capacity: usize,
    /// Minimum predicted-to-tag distance for the range linearization.
    pub min_range: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            extrinsics: [0.2, 0.0, 0.0],
            q_sigma_d: 0.005,
            q_sigma_theta: 0.002,
            p_pre_diag: 1e-6,
            soft_threshold: 0.5,
            hard_threshold: 3.0,
            angle_weight: 1.0,
            theta_weight: 1.0,
            r_min: 1e-4,
            nominal_sigma_xy: 0.03,
            nominal_sigma_theta: 0.02,
            range_sigma: 0.05,
            dep_share: 0.0,
            p0_diag: [1.0, 1.0, 0.5],
            kidnap_limit: 5,
            history_capacity: 200,
            min_range: 0.1,
        }
    }
}

impl FilterParams {
    fn screen_config(&self) -> ScreenConfig {
        ScreenConfig {
            soft_threshold: self.soft_threshold,
            hard_threshold: self.hard_threshold,
            angle_weight: self.angle_weight,
        }
    }

    fn adaptive_config(&self) -> AdaptiveNoiseConfig {
        AdaptiveNoiseConfig {
            theta_weight: self.theta_weight,
            dep_fraction: self.dep_share,
            r_min: self.r_min,
            angle_weight: self.angle_weight,
        }
    }

    fn process_noise(&self) -> ProcessNoiseConfig {
        ProcessNoiseConfig::from_sigmas(self.q_sigma_d, self.q_sigma_theta, self.p_pre_diag)
    }

    fn init_config(&self) -> InitConfig {
        InitConfig {
            p0: CovMatrix3::from_diagonal(&Vector3::new(
                self.p0_diag[0],
                self.p0_diag[1],
                self.p0_diag[2],
            )),
            kidnap_discard_limit: self.kidnap_limit,
        }
    }

    /// Nominal complete-measurement noise with the dependent share applied.
    fn nominal_noise(&self, dep_share: f64) -> SplitNoise {
        let mut r = DMatrix::<f64>::zeros(3, 3);
        r[(0, 0)] = self.nominal_sigma_xy * self.nominal_sigma_xy;
        r[(1, 1)] = self.nominal_sigma_xy * self.nominal_sigma_xy;
        r[(2, 2)] = self.nominal_sigma_theta * self.nominal_sigma_theta;
        SplitNoise {
            r_dep: &r * dep_share,
            r_ind: &r * (1.0 - dep_share),
        }
    }
}

/// Per-epoch output of one method run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub method: Method,
    /// Estimated pose per epoch 0..=N; None where no estimate exists.
    pub poses: Vec<Option<Pose2>>,
    /// Full filter states for the fusion methods; None for TagSLAM.
    pub states: Vec<Option<SplitState>>,
    pub decisions: Vec<(u64, ScreeningDecision)>,
    /// Epochs at which (re-)initialization happened.
    pub init_epochs: Vec<u64>,
    /// Per-epoch flag: prediction-only output while re-initialization is
    /// pending, treated as unreliable.
    pub unreliable: Vec<bool>,
    pub unknown_tag_count: usize,
    pub stale_dropped: usize,
}

/// Run one comparative method over the stream.
pub fn run_method(
    method: Method,
    scenario: &Scenario,
    stream: &Stream,
) -> Result<RunRecord> {
    let flags = method.flags();
    let params = &scenario.filter;
    let n = scenario.duration_epochs as usize;
    let extrinsics = camera_extrinsics(params);
    let map = &scenario.tag_layout;
    let noise_cfg = params.process_noise();
    let init_cfg = params.init_config();
    let screen_cfg = params.screen_config();
    let adaptive_cfg = params.adaptive_config();
    let dep_share = if flags.split { params.dep_share } else { 0.0 };

    let mut by_delivery: BTreeMap<u64, Vec<TagMeasurement>> = BTreeMap::new();
    for dm in &stream.measurements {
        by_delivery.entry(dm.delivery).or_default().push(dm.meas);
    }

    let mut record = RunRecord {
        method,
        poses: vec![None; n + 1],
        states: vec![None; n + 1],
        decisions: Vec::new(),
        init_epochs: Vec::new(),
        unreliable: vec![false; n + 1],
        unknown_tag_count: 0,
        stale_dropped: 0,
    };

    if !flags.fuse_motion {
        // Measurement-only pose chain: the latest complete detection
        // delivered in an epoch is the estimate for that epoch.
        for k in 1..=scenario.duration_epochs {
            if let Some(batch) = by_delivery.get(&k) {
                for meas in batch {
                    if let MeasurementPayload::Complete { .. } = meas.payload {
                        match complete_measurement(meas, map, &extrinsics) {
                            Ok((z, _)) => {
                                record.poses[k as usize] = Some(Pose2::new(z[0], z[1], z[2]));
                            }
                            Err(Error::UnknownTag(_)) => record.unknown_tag_count += 1,
                            Err(e) => return Err(e),
                        }
                    }
                }
            }
        }
        return Ok(record);
    }

    let mut state: Option<SplitState> = None;
    let mut buf = HistoryBuffer::new(params.history_capacity);
    let mut monitor = KidnapMonitor::new(params.kidnap_limit);
    let mut reinit_pending = false;

    for k in 1..=scenario.duration_epochs {
        let u = stream.odometry[(k - 1) as usize];
        if let Some(st) = &mut state {
            let mut next = split_cif::predict(st, &u, &noise_cfg);
            if !flags.split {
                next.p_dep = CovMatrix3::zeros();
            }
            buf.record_epoch(next.clone(), u)?;
            *st = next;
        }

        if let Some(batch) = by_delivery.get(&k) {
            for meas in batch {
                if state.is_none() || reinit_pending {
                    // Dynamic (re-)initialization from the next complete
                    // detection that matches the map.
                    if let MeasurementPayload::Complete { .. } = meas.payload {
                        match complete_measurement(meas, map, &extrinsics) {
                            Ok((z, _)) => {
                                let st = SplitState::new(
                                    Pose2::new(z[0], z[1], z[2]),
                                    init_cfg.p0,
                                    CovMatrix3::zeros(),
                                    k,
                                );
                                buf.clear();
                                buf.record_epoch(st.clone(), Control::zero(scenario.dt))?;
                                state = Some(st);
                                monitor.reset();
                                reinit_pending = false;
                                record.init_epochs.push(k);
                            }
                            Err(Error::UnknownTag(_)) => record.unknown_tag_count += 1,
                            Err(e) => return Err(e),
                        }
                    }
                    continue;
                }

                let decision: Cell<Option<ScreeningDecision>> = Cell::new(None);
                let unknown: Cell<bool> = Cell::new(false);
                let update_fn = |s: &SplitState| -> SplitState {
                    apply_measurement(
                        s,
                        meas,
                        map,
                        &extrinsics,
                        &flags,
                        params,
                        &screen_cfg,
                        &adaptive_cfg,
                        dep_share,
                        &decision,
                        &unknown,
                    )
                };

                let effective = if flags.back_project && meas.stamp < k {
                    meas.stamp
                } else {
                    k
                };
                if effective < k {
                    match buf.apply_delayed(effective, update_fn, &noise_cfg) {
                        Ok(mut head) => {
                            if !flags.split {
                                head.p_dep = CovMatrix3::zeros();
                            }
                            state = Some(head);
                        }
                        Err(Error::StaleMeasurement { .. }) => record.stale_dropped += 1,
                        Err(e) => return Err(e),
                    }
                } else {
                    let st = state.as_ref().unwrap();
                    let mut new_st = update_fn(st);
                    if !flags.split {
                        new_st.p_dep = CovMatrix3::zeros();
                    }
                    buf.replace_head(new_st.clone());
                    state = Some(new_st);
                }
                if unknown.get() {
                    record.unknown_tag_count += 1;
                }
                if let Some(d) = decision.get() {
                    record.decisions.push((k, d));
                    if monitor.observe_decision(d) {
                        reinit_pending = true;
                    }
                }
            }
        }

        if let Some(st) = &state {
            record.poses[k as usize] = Some(st.mean);
            record.states[k as usize] = Some(st.clone());
            record.unreliable[k as usize] = reinit_pending;
        }
    }
    Ok(record)
}

#[allow(clippy::too_many_arguments)]
fn apply_measurement(
    s: &SplitState,
    meas: &TagMeasurement,
    map: &crate::measurement::TagMap,
    extrinsics: &Pose2,
    flags: &MethodFlags,
    params: &FilterParams,
    screen_cfg: &ScreenConfig,
    adaptive_cfg: &AdaptiveNoiseConfig,
    dep_share: f64,
    decision: &Cell<Option<ScreeningDecision>>,
    unknown: &Cell<bool>,
) -> SplitState {
    match meas.payload {
        MeasurementPayload::Complete { .. } => {
            let (z, h) = match complete_measurement(meas, map, extrinsics) {
                Ok(zh) => zh,
                Err(_) => {
                    unknown.set(true);
                    return s.clone();
                }
            };
            let d = if flags.adaptive {
                screen(&s.mean, &z, screen_cfg)
            } else {
                // Hard screening only.
                if residual_norm(&s.mean, &z, screen_cfg.angle_weight) > screen_cfg.hard_threshold
                {
                    ScreeningDecision::Discard
                } else {
                    ScreeningDecision::Accept
                }
            };
            decision.set(Some(d));
            let noise = match d {
                ScreeningDecision::Discard => return s.clone(),
                ScreeningDecision::Accept => params.nominal_noise(dep_share),
                ScreeningDecision::SoftAccept => {
                    adaptive_noise(&s.mean, &z, meas.view_distance, meas.view_angle, adaptive_cfg)
                }
            };
            let noise = force_split(noise, flags.split);
            match split_cif::update_split(s, &z, &h, &noise) {
                Ok(out) => out,
                // Singular innovation: treat as discarded.
                Err(_) => s.clone(),
            }
        }
        MeasurementPayload::DistanceOnly { range } => {
            if !flags.use_partial {
                return s.clone();
            }
            let Ok(tag) = map.get(meas.tag_id) else {
                unknown.set(true);
                return s.clone();
            };
            let Ok((h_row, z_tilde)) =
                linearize_distance(&s.mean, (tag.x, tag.y), range, params.min_range)
            else {
                return s.clone();
            };
            let x = s.mean.as_vector();
            let innovation = z_tilde - (h_row[0] * x[0] + h_row[1] * x[1] + h_row[2] * x[2]);
            let d = if innovation.abs() > screen_cfg.hard_threshold {
                ScreeningDecision::Discard
            } else {
                ScreeningDecision::Accept
            };
            decision.set(Some(d));
            if d == ScreeningDecision::Discard {
                return s.clone();
            }
            let z = DVector::from_row_slice(&[z_tilde]);
            let h = DMatrix::from_row_slice(1, 3, &[h_row[0], h_row[1], h_row[2]]);
            // Range noise is independent: the partial path books no
            // dependent part.
            let noise = SplitNoise::independent(DMatrix::from_element(
                1,
                1,
                params.range_sigma * params.range_sigma,
            ));
            match split_cif::update_split(s, &z, &h, &noise) {
                Ok(out) => out,
                Err(_) => s.clone(),
            }
        }
    }
}

fn force_split(mut noise: SplitNoise, split: bool) -> SplitNoise {
    if !split {
        noise.r_ind += &noise.r_dep;
        noise.r_dep.fill(0.0);
    }
    noise
}
