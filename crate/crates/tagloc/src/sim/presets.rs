//! Ready-made scenarios. These back the bundled scenario files and the
//! evaluation suite; all are deterministic in the seed.

use std::f64::consts::PI;

use crate::geometry::Pose2;
use crate::measurement::TagMap;

use super::{DriveConfig, Event, FilterParams, Scenario, SensorModel};

/// Waypoints shuttling across a 24 m corridor so detections keep coming for
/// the whole run.
fn shuttle_waypoints(legs: usize) -> Vec<Pose2> {
    (0..legs)
        .map(|i| {
            let x = if i % 2 == 0 { 0.0 } else { 24.0 };
            Pose2::new(x, i as f64 * 0.2, 0.0)
        })
        .collect()
}

/// Tags on both corridor walls facing inward, `pitch` meters apart per wall.
fn corridor_tags(count_per_wall: u32, pitch: f64, first_x: f64) -> TagMap {
    let mut layout = TagMap::default();
    for i in 0..count_per_wall {
        let x = first_x + pitch * i as f64;
        layout.entries.insert(2 * i, Pose2::new(x, 2.0, -PI / 2.0));
        layout
            .entries
            .insert(2 * i + 1, Pose2::new(x + pitch / 2.0, -2.0, PI / 2.0));
    }
    layout
}

fn corridor_base(name: &str, seed: u64) -> Scenario {
    Scenario {
        name: name.into(),
        seed,
        duration_epochs: 400,
        dt: 0.1,
        waypoints: shuttle_waypoints(8),
        tag_layout: corridor_tags(8, 3.0, 2.0),
        sensor: SensorModel::default(),
        events: vec![],
        drive: DriveConfig::default(),
        odom_sigma_d: 0.005,
        odom_sigma_theta: 0.002,
        filter: FilterParams {
            dep_share: 0.64,
            ..FilterParams::default()
        },
    }
}

/// Warehouse aisle with temporally correlated noise, 5% outliers, and 20%
/// distance-only degradations: the main method-comparison scenario.
pub fn path1(seed: u64) -> Scenario {
    let mut s = corridor_base("path1", seed);
    s.sensor.ar1_rho = 0.8;
    s.sensor.outlier_rate = 0.05;
    s.sensor.partial_base = 0.2;
    s
}

/// Densely tagged aisle with short sensor range and strongly correlated
/// noise; the filter noise model is matched so the split filter's reported
/// covariance tracks the real error statistics.
pub fn consistency(seed: u64) -> Scenario {
    let mut s = corridor_base("consistency", seed);
    s.tag_layout = corridor_tags(20, 1.2, 0.6);
    s.sensor.ar1_rho = 0.8;
    s.sensor.max_range = 4.0;
    s.filter.nominal_sigma_xy *= 1.02;
    s.filter.nominal_sigma_theta *= 1.02;
    s
}

/// Clean stream except for a long window in which measurements arrive 2 s
/// (20 epochs) late.
pub fn delayed(seed: u64) -> Scenario {
    let mut s = corridor_base("delayed", seed);
    s.sensor.ar1_rho = 0.8;
    s.events = vec![Event::DelayWindow {
        start: 60,
        end: 340,
        delay: 20,
    }];
    s
}

/// Clean stream with a 2 m kidnap at epoch 200. The hard screen is tightened
/// below the kidnap offset so post-kidnap detections are discarded and the
/// monitor triggers re-initialization.
pub fn kidnap(seed: u64) -> Scenario {
    let mut s = corridor_base("kidnap", seed);
    s.filter.hard_threshold = 1.5;
    s.events = vec![Event::Kidnap {
        epoch: 200,
        offset: [2.0, 0.0, 0.0],
    }];
    s
}

/// Kidnap epoch used by [`kidnap`].
pub const KIDNAP_EPOCH: u64 = 200;
