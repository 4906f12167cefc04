//! Planar rigid-transform arithmetic shared by every module.
//!
//! Angles live on the half-open interval (-pi, pi]. All residuals that involve
//! a heading go through [`angle_diff`] so wrap-around never leaks into a norm.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A 3x3 covariance over (x, y, theta).
pub type CovMatrix3 = Matrix3<f64>;

/// Planar pose: position in meters, heading in radians on (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// Wrap assuming a finite input; shared by the pose operations.
#[inline]
fn wrap_unchecked(theta: f64) -> f64 {
    let mut a = theta.rem_euclid(2.0 * PI); // [0, 2pi)
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Normalize an angle into (-pi, pi]; the result differs from the input by an
/// exact multiple of 2pi.
pub fn wrap_angle(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::NonFiniteAngle(theta));
    }
    Ok(wrap_unchecked(theta))
}

/// Wrapped difference a - b, the residual form used everywhere an angle enters
/// an innovation or cost.
#[inline]
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_unchecked(a - b)
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_unchecked(theta),
        }
    }

    pub fn identity() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.theta)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    /// SE(2) composition self * other.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )
    }

    /// Inverse transform: self.compose(&self.inverse()) is the identity.
    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            -c * self.x - s * self.y,
            s * self.x - c * self.y,
            -self.theta,
        )
    }

    /// Euclidean distance between positions, ignoring heading.
    pub fn position_distance(&self, other: &Pose2) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Global robot pose implied by one tag detection:
/// tag_global * tag_in_camera^-1 * camera_in_robot^-1.
pub fn robot_pose_from_tag_detection(
    tag_global: &Pose2,
    tag_in_camera: &Pose2,
    camera_in_robot: &Pose2,
) -> Pose2 {
    tag_global
        .compose(&tag_in_camera.inverse())
        .compose(&camera_in_robot.inverse())
}

/// Force exact symmetry: (m + m^T) / 2.
pub fn symmetrize(m: &CovMatrix3) -> CovMatrix3 {
    (m + m.transpose()) * 0.5
}

/// Symmetrize and clamp negative eigenvalues to zero, so the result is PSD.
pub fn floor_psd(m: &CovMatrix3) -> CovMatrix3 {
    let sym = symmetrize(m);
    let eig = sym.symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return sym;
    }
    let mut vals = eig.eigenvalues;
    for v in vals.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let rebuilt = &eig.eigenvectors * Matrix3::from_diagonal(&vals) * eig.eigenvectors.transpose();
    symmetrize(&rebuilt)
}

/// Smallest eigenvalue of the symmetrized matrix; >= -tol means PSD in tests.
pub fn min_eigenvalue(m: &CovMatrix3) -> f64 {
    symmetrize(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-12;

    #[test]
    fn wrap_basic_cases() {
        assert_eq!(wrap_angle(0.0).unwrap(), 0.0);
        assert!((wrap_angle(3.0 * PI).unwrap() - PI).abs() < TOL);
        // Half-open convention: -pi maps to +pi.
        assert!((wrap_angle(-PI).unwrap() - PI).abs() < TOL);
        assert!(wrap_angle(f64::NAN).is_err());
        assert!(wrap_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn wrap_is_idempotent_and_2pi_periodic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let a: f64 = rng.gen_range(-50.0..50.0);
            let w = wrap_angle(a).unwrap();
            assert!(w > -PI && w <= PI);
            assert!((wrap_angle(w).unwrap() - w).abs() < TOL);
            let k = ((a - w) / (2.0 * PI)).round();
            assert!((a - w - k * 2.0 * PI).abs() < 1e-9);
        }
    }

    #[test]
    fn compose_identity_translation_rotation() {
        let p = Pose2::new(1.5, -2.0, 0.7);
        let id = Pose2::identity();
        let c = id.compose(&p);
        assert!((c.x - p.x).abs() < TOL && (c.y - p.y).abs() < TOL);

        let t = Pose2::new(1.0, 0.0, 0.0).compose(&Pose2::new(1.0, 0.0, 0.0));
        assert!((t.x - 2.0).abs() < TOL && t.y.abs() < TOL && t.theta.abs() < TOL);

        let r = Pose2::new(0.0, 0.0, PI / 2.0).compose(&Pose2::new(1.0, 0.0, 0.0));
        assert!(r.x.abs() < TOL && (r.y - 1.0).abs() < TOL);
        assert!((r.theta - PI / 2.0).abs() < TOL);
    }

    #[test]
    fn inverse_cases() {
        let id = Pose2::identity().inverse();
        assert!(id.x.abs() < TOL && id.y.abs() < TOL && id.theta.abs() < TOL);
        let t = Pose2::new(1.0, 0.0, 0.0).inverse();
        assert!((t.x + 1.0).abs() < TOL);
        let r = Pose2::new(0.0, 0.0, PI / 2.0).inverse();
        assert!((r.theta + PI / 2.0).abs() < TOL);
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose2 {
        Pose2::new(
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-PI..PI),
        )
    }

    #[test]
    fn inverse_is_two_sided() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let p = random_pose(&mut rng);
            for q in [p.compose(&p.inverse()), p.inverse().compose(&p)] {
                assert!(q.x.abs() < TOL && q.y.abs() < TOL);
                assert!(angle_diff(q.theta, 0.0).abs() < TOL);
            }
        }
    }

    #[test]
    fn compose_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let c = random_pose(&mut rng);
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            assert!((l.x - r.x).abs() < 1e-9 && (l.y - r.y).abs() < 1e-9);
            assert!(angle_diff(l.theta, r.theta).abs() < 1e-9);
        }
    }

    #[test]
    fn tag_detection_trivial_chains() {
        let id = Pose2::identity();
        let r = robot_pose_from_tag_detection(&id, &id, &id);
        assert!(r.x.abs() < TOL && r.y.abs() < TOL && r.theta.abs() < TOL);

        let r = robot_pose_from_tag_detection(
            &Pose2::new(5.0, 0.0, 0.0),
            &Pose2::new(2.0, 0.0, 0.0),
            &id,
        );
        assert!((r.x - 3.0).abs() < TOL && r.y.abs() < TOL);
    }

    #[test]
    fn tag_detection_round_trip() {
        // Forward-simulate a detection from a known robot pose and recover it.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let robot = random_pose(&mut rng);
            let tag = random_pose(&mut rng);
            let extrinsics = random_pose(&mut rng);
            let camera = robot.compose(&extrinsics);
            let tag_in_camera = camera.inverse().compose(&tag);
            let recovered = robot_pose_from_tag_detection(&tag, &tag_in_camera, &extrinsics);
            assert!((recovered.x - robot.x).abs() < 1e-9);
            assert!((recovered.y - robot.y).abs() < 1e-9);
            assert!(angle_diff(recovered.theta, robot.theta).abs() < 1e-9);
        }
    }

    #[test]
    fn floor_psd_clamps_negative_eigenvalues() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, -1e-3, 2.0));
        let f = floor_psd(&m);
        assert!(min_eigenvalue(&f) >= -1e-15);
        assert!((f[(0, 0)] - 1.0).abs() < 1e-12 && (f[(2, 2)] - 2.0).abs() < 1e-12);
    }
}
