//! Forklift kinematic state-evolution model with analytic Jacobians.
//!
//! One motion epoch advances the pose by a translation increment along the
//! mid-epoch heading (steering angle included) and a heading increment:
//!
//! x' = x + dd * cos(beta + theta + dth/2)
//! y' = y + dd * sin(beta + theta + dth/2)
//! th' = wrap(theta + dth)
//!
//! Process noise lives in control space (dd, dth), so Q is 2x2; an additive
//! model-error floor covers the simplifications of the vehicle model.

use nalgebra::{Matrix2, Matrix3, Matrix3x2};
use serde::{Deserialize, Serialize};

use crate::geometry::{CovMatrix3, Pose2};

/// One motion epoch: odometry increments plus the front-wheel steering angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control {
    /// Translation increment dd = v * dt, meters.
    pub delta_d: f64,
    /// Heading increment dth = w * dt, radians.
    pub delta_theta: f64,
    /// Steering angle of the front wheel, radians, |beta| < pi/2.
    pub beta: f64,
    /// Time step, seconds, > 0.
    pub dt: f64,
}

impl Control {
    pub fn zero(dt: f64) -> Self {
        Self {
            delta_d: 0.0,
            delta_theta: 0.0,
            beta: 0.0,
            dt,
        }
    }
}

/// Process-noise configuration for the prediction step.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessNoiseConfig {
    /// Covariance of the control-space noise on (dd, dth).
    pub q: Matrix2<f64>,
    /// Additive model-error floor on the independent state covariance.
    pub p_pre_ind: CovMatrix3,
}

impl ProcessNoiseConfig {
    pub fn from_sigmas(sigma_d: f64, sigma_theta: f64, p_pre_diag: f64) -> Self {
        Self {
            q: Matrix2::from_diagonal(&nalgebra::Vector2::new(
                sigma_d * sigma_d,
                sigma_theta * sigma_theta,
            )),
            p_pre_ind: CovMatrix3::from_diagonal_element(p_pre_diag),
        }
    }

    pub fn zero() -> Self {
        Self {
            q: Matrix2::zeros(),
            p_pre_ind: CovMatrix3::zeros(),
        }
    }
}

#[inline]
fn mid_heading(p: &Pose2, u: &Control) -> f64 {
    u.beta + p.theta + 0.5 * u.delta_theta
}

/// Advance a pose through one control epoch. Noise is not added here; it
/// belongs to the simulator and to the covariance propagation.
pub fn evolve(p: &Pose2, u: &Control) -> Pose2 {
    let phi = mid_heading(p, u);
    Pose2::new(
        p.x + u.delta_d * phi.cos(),
        p.y + u.delta_d * phi.sin(),
        p.theta + u.delta_theta,
    )
}

/// Jacobian of `evolve` with respect to the state (x, y, theta).
pub fn jacobian_state(p: &Pose2, u: &Control) -> Matrix3<f64> {
    let phi = mid_heading(p, u);
    let mut g = Matrix3::identity();
    g[(0, 2)] = -u.delta_d * phi.sin();
    g[(1, 2)] = u.delta_d * phi.cos();
    g
}

/// Jacobian of `evolve` with respect to the control-noise coordinates
/// (dd, dth).
pub fn jacobian_control(p: &Pose2, u: &Control) -> Matrix3x2<f64> {
    let phi = mid_heading(p, u);
    let (s, c) = phi.sin_cos();
    let mut g = Matrix3x2::zeros();
    g[(0, 0)] = c;
    g[(0, 1)] = -0.5 * u.delta_d * s;
    g[(1, 0)] = s;
    g[(1, 1)] = 0.5 * u.delta_d * c;
    g[(2, 1)] = 1.0;
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::angle_diff;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn evolve_trivial_cases() {
        let p = Pose2::new(0.3, -0.7, 0.4);
        let u = Control {
            delta_d: 0.0,
            delta_theta: 0.0,
            beta: 0.3,
            dt: 0.1,
        };
        let q = evolve(&p, &u);
        assert_eq!(q, p);

        let straight = evolve(
            &Pose2::identity(),
            &Control {
                delta_d: 1.0,
                delta_theta: 0.0,
                beta: 0.0,
                dt: 0.1,
            },
        );
        assert!((straight.x - 1.0).abs() < 1e-12 && straight.y.abs() < 1e-12);

        let arc = evolve(
            &Pose2::identity(),
            &Control {
                delta_d: 1.0,
                delta_theta: PI / 2.0,
                beta: 0.0,
                dt: 0.1,
            },
        );
        assert!((arc.x - (PI / 4.0).cos()).abs() < 1e-12);
        assert!((arc.y - (PI / 4.0).sin()).abs() < 1e-12);
        assert!((arc.theta - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn straight_segment_is_reversible() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..200 {
            let p = Pose2::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-PI..PI),
            );
            let u = Control {
                delta_d: rng.gen_range(-1.0..1.0),
                delta_theta: 0.0,
                beta: rng.gen_range(-0.5..0.5),
                dt: 0.1,
            };
            let back = Control {
                delta_d: -u.delta_d,
                ..u
            };
            let q = evolve(&evolve(&p, &u), &back);
            assert!((q.x - p.x).abs() < 1e-12 && (q.y - p.y).abs() < 1e-12);
            assert!(angle_diff(q.theta, p.theta).abs() < 1e-12);
        }
    }

    /// Central finite differences of `evolve`, the independent oracle for both
    /// Jacobians. Angle rows use wrapped differences.
    fn fd_state(p: &Pose2, u: &Control, h: f64) -> Matrix3<f64> {
        let mut g = Matrix3::zeros();
        for j in 0..3 {
            let mut lo = p.as_vector();
            let mut hi = p.as_vector();
            lo[j] -= h;
            hi[j] += h;
            // Bypass constructor wrapping so the perturbation is exact.
            let plo = Pose2 {
                x: lo[0],
                y: lo[1],
                theta: lo[2],
            };
            let phi = Pose2 {
                x: hi[0],
                y: hi[1],
                theta: hi[2],
            };
            let flo = evolve(&plo, u);
            let fhi = evolve(&phi, u);
            g[(0, j)] = (fhi.x - flo.x) / (2.0 * h);
            g[(1, j)] = (fhi.y - flo.y) / (2.0 * h);
            g[(2, j)] = angle_diff(fhi.theta, flo.theta) / (2.0 * h);
        }
        g
    }

    fn fd_control(p: &Pose2, u: &Control, h: f64) -> Matrix3x2<f64> {
        let mut g = Matrix3x2::zeros();
        for j in 0..2 {
            let mut lo = *u;
            let mut hi = *u;
            match j {
                0 => {
                    lo.delta_d -= h;
                    hi.delta_d += h;
                }
                _ => {
                    lo.delta_theta -= h;
                    hi.delta_theta += h;
                }
            }
            let flo = evolve(p, &lo);
            let fhi = evolve(p, &hi);
            g[(0, j)] = (fhi.x - flo.x) / (2.0 * h);
            g[(1, j)] = (fhi.y - flo.y) / (2.0 * h);
            g[(2, j)] = angle_diff(fhi.theta, flo.theta) / (2.0 * h);
        }
        g
    }

    #[test]
    fn zero_translation_gives_identity_state_jacobian() {
        let u = Control {
            delta_d: 0.0,
            delta_theta: 0.3,
            beta: 0.1,
            dt: 0.1,
        };
        let g = jacobian_state(&Pose2::new(1.0, 2.0, 0.5), &u);
        assert_eq!(g, Matrix3::identity());
    }

    #[test]
    fn analytic_columns_at_reference_point() {
        let u = Control {
            delta_d: 1.0,
            delta_theta: 0.0,
            beta: 0.0,
            dt: 0.1,
        };
        let gx = jacobian_state(&Pose2::identity(), &u);
        assert!((gx[(0, 2)] - 0.0).abs() < 1e-12);
        assert!((gx[(1, 2)] - 1.0).abs() < 1e-12);
        let gu = jacobian_control(&Pose2::identity(), &Control { delta_d: 0.0, ..u });
        assert!((gu[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(gu[(1, 0)].abs() < 1e-12);
        assert!((gu[(2, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let p = Pose2::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-PI..PI),
            );
            let u = Control {
                delta_d: rng.gen_range(-1.0..1.0),
                delta_theta: rng.gen_range(-0.5..0.5),
                beta: rng.gen_range(-1.0..1.0),
                dt: 0.1,
            };
            let gx = jacobian_state(&p, &u);
            let gx_fd = fd_state(&p, &u, 1e-6);
            assert!((gx - gx_fd).abs().max() < 1e-5, "Gx mismatch");
            let gu = jacobian_control(&p, &u);
            let gu_fd = fd_control(&p, &u, 1e-6);
            assert!((gu - gu_fd).abs().max() < 1e-5, "Gu mismatch");
        }
    }
}
