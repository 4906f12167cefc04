use thiserror::Error;

/// Errors surfaced by the estimation pipeline and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("angle is not finite: {0}")]
    NonFiniteAngle(f64),
    #[error("tag {0} is not in the map")]
    UnknownTag(u32),
    #[error("innovation covariance is numerically singular (condition number {cond:.3e})")]
    SingularInnovation { cond: f64 },
    #[error("predicted pose is {dist:.3} m from the tag, below the linearization limit {min:.3} m")]
    RangeSingularity { dist: f64, min: f64 },
    #[error("distance-only measurement cannot initialize the pose")]
    NotInitializable,
    #[error("history epoch {got} does not follow {expected}")]
    NonContiguousEpoch { expected: u64, got: u64 },
    #[error("measurement stamped {stamp} is older than the history tail {oldest}")]
    StaleMeasurement { stamp: u64, oldest: u64 },
    #[error("history buffer is empty")]
    EmptyHistory,
    #[error("error series is empty")]
    EmptySeries,
    #[error("series lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("waypoint {index} is unreachable under the steering limits")]
    UnreachableWaypoint { index: usize },
    #[error("scenario needs at least two waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("unknown method name '{0}' (valid: TagSLAM, EKF-Full, SCIF-nonMA, SCIF-nonP, SCIF-nonBP, SCIF-Full)")]
    UnknownMethod(String),
    #[error("parse error in {file}: {message}")]
    Parse { file: String, message: String },
    #[error("map optimization did not converge after {iters} iterations")]
    NonConverged { iters: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
