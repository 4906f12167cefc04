//! Planar robot localization against a pre-built fiducial-tag map.
//!
//! The estimator is a split covariance intersection filter (Split CIF): each
//! covariance is kept as an independent part, fused Kalman-style, and a
//! dependent part, inflated by a fusion weight so the result stays consistent
//! when measurement errors carry unknown temporal correlation. Around the core
//! filter this crate provides the forklift motion model, complete-pose and
//! distance-only tag measurement models with adaptive outlier handling,
//! back-projection of delayed measurements, dynamic (re-)initialization for
//! kidnap recovery, a pose-graph tag-map builder, and a deterministic
//! simulation harness that compares the ablated method variants.

pub mod delay;
pub mod error;
pub mod formats;
pub mod geometry;
pub mod initializer;
pub mod map_builder;
pub mod measurement;
pub mod metrics;
pub mod motion_model;
pub mod sim;
pub mod split_cif;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
