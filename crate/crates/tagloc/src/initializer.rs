//! Dynamic initialization from the first usable tag detection, and kidnap
//! detection via a run of consecutive discards.

use serde::{Deserialize, Serialize};

use crate::geometry::CovMatrix3;
use crate::measurement::{complete_measurement, ScreeningDecision, TagMap, TagMeasurement};
use crate::split_cif::SplitState;
use crate::{geometry::Pose2, Result};

/// Initial covariance and the discard run length that triggers re-init.
#[derive(Debug, Clone, PartialEq)]
pub struct InitConfig {
    /// Initial total covariance; booked entirely as independent.
    pub p0: CovMatrix3,
    /// Consecutive discards that flag a kidnap.
    pub kidnap_discard_limit: usize,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            p0: CovMatrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, 0.5)),
            kidnap_discard_limit: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackingState {
    Tracking,
    Reinitializing,
}

/// Counts consecutive discarded measurements; any acceptance resets it.
#[derive(Debug, Clone)]
pub struct KidnapMonitor {
    pub consecutive_discards: usize,
    pub state: TrackingState,
    limit: usize,
}

impl KidnapMonitor {
    pub fn new(limit: usize) -> Self {
        Self {
            consecutive_discards: 0,
            state: TrackingState::Tracking,
            limit,
        }
    }

    /// Feed one screening decision; returns true when re-initialization is
    /// required.
    pub fn observe_decision(&mut self, d: ScreeningDecision) -> bool {
        match d {
            ScreeningDecision::Discard => {
                self.consecutive_discards += 1;
                if self.consecutive_discards >= self.limit {
                    self.state = TrackingState::Reinitializing;
                }
            }
            ScreeningDecision::Accept | ScreeningDecision::SoftAccept => {
                self.consecutive_discards = 0;
            }
        }
        self.state == TrackingState::Reinitializing
    }

    /// Back to tracking after a successful re-initialization.
    pub fn reset(&mut self) {
        self.consecutive_discards = 0;
        self.state = TrackingState::Tracking;
    }
}

/// Build the initial split state from a complete detection: mean from the
/// detection chain, all covariance independent.
pub fn init_from_measurement(
    meas: &TagMeasurement,
    map: &TagMap,
    extrinsics: &Pose2,
    cfg: &InitConfig,
) -> Result<SplitState> {
    let (z, _h) = complete_measurement(meas, map, extrinsics)?;
    Ok(SplitState::new(
        Pose2::new(z[0], z[1], z[2]),
        cfg.p0,
        CovMatrix3::zeros(),
        meas.stamp,
    ))
}
