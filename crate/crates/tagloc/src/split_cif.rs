//! Split covariance intersection filter core.
//!
//! The state covariance is carried as an independent part and a dependent
//! part. Prediction propagates both through the motion-model Jacobians; the
//! update inflates the dependent parts of state and measurement by a weight
//! omega before a Kalman-form gain, keeping the fused estimate consistent
//! under unknown correlation between the two sources. With both dependent
//! parts zero the update reduces exactly to the Kalman filter.

use nalgebra::{DMatrix, DVector, Matrix3};

use crate::geometry::{angle_diff, floor_psd, symmetrize, CovMatrix3, Pose2};
use crate::motion_model::{self, Control, ProcessNoiseConfig};
use crate::{Error, Result};

/// Maximum acceptable condition number of the innovation covariance.
pub const MAX_INNOVATION_COND: f64 = 1e12;
/// Search interval bounds for the omega optimization.
pub const OMEGA_MIN: f64 = 1e-3;
pub const OMEGA_MAX: f64 = 1.0 - 1e-3;
/// Golden-section termination tolerance on omega.
pub const OMEGA_TOL: f64 = 1e-4;

/// Frobenius-norm threshold below which a dependent part counts as absent.
const ZERO_MAT_TOL: f64 = 1e-15;

/// Pose estimate with split covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitState {
    pub mean: Pose2,
    /// Independent covariance component.
    pub p_ind: CovMatrix3,
    /// Dependent (possibly correlated) covariance component.
    pub p_dep: CovMatrix3,
    /// Discrete time index.
    pub epoch: u64,
}

impl SplitState {
    pub fn new(mean: Pose2, p_ind: CovMatrix3, p_dep: CovMatrix3, epoch: u64) -> Self {
        Self {
            mean,
            p_ind,
            p_dep,
            epoch,
        }
    }

    /// Total covariance P = P_i + P_d.
    pub fn total_cov(&self) -> CovMatrix3 {
        self.p_ind + self.p_dep
    }
}

/// Measurement noise in split form.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitNoise {
    pub r_ind: DMatrix<f64>,
    pub r_dep: DMatrix<f64>,
}

impl SplitNoise {
    pub fn independent(r: DMatrix<f64>) -> Self {
        let dim = r.nrows();
        Self {
            r_ind: r,
            r_dep: DMatrix::zeros(dim, dim),
        }
    }
}

fn is_zero_mat(m: &DMatrix<f64>) -> bool {
    m.norm() <= ZERO_MAT_TOL
}

fn is_zero_cov(m: &CovMatrix3) -> bool {
    m.norm() <= ZERO_MAT_TOL
}

/// Propagate the split state through one control epoch.
pub fn predict(state: &SplitState, u: &Control, noise: &ProcessNoiseConfig) -> SplitState {
    let gx = motion_model::jacobian_state(&state.mean, u);
    let gu = motion_model::jacobian_control(&state.mean, u);
    let p_ind = symmetrize(
        &(gx * state.p_ind * gx.transpose() + gu * noise.q * gu.transpose() + noise.p_pre_ind),
    );
    let p_dep = symmetrize(&(gx * state.p_dep * gx.transpose()));
    SplitState {
        mean: motion_model::evolve(&state.mean, u),
        p_ind,
        p_dep,
        epoch: state.epoch + 1,
    }
}

/// Inflated source covariances for a given omega, with guarded divisions so a
/// vanishing dependent part never divides by zero.
fn inflate(
    p_ind: &CovMatrix3,
    p_dep: &CovMatrix3,
    noise: &SplitNoise,
    omega: f64,
) -> (Matrix3<f64>, DMatrix<f64>) {
    let p1 = if is_zero_cov(p_dep) {
        *p_ind
    } else {
        p_dep / omega + p_ind
    };
    let p2 = if is_zero_mat(&noise.r_dep) {
        noise.r_ind.clone()
    } else {
        &noise.r_dep / (1.0 - omega) + &noise.r_ind
    };
    (p1, p2)
}

/// Trace of the fused total covariance for a candidate omega; the objective
/// of the omega optimization. Returns infinity when the innovation covariance
/// cannot be inverted.
fn fused_trace(
    p_ind: &CovMatrix3,
    p_dep: &CovMatrix3,
    noise: &SplitNoise,
    h: &DMatrix<f64>,
    omega: f64,
) -> f64 {
    let (p1, p2) = inflate(p_ind, p_dep, noise, omega);
    let s = h * p1 * h.transpose() + &p2;
    let Some(s_inv) = s.clone().try_inverse() else {
        return f64::INFINITY;
    };
    let k = p1 * h.transpose() * s_inv;
    let p = (Matrix3::identity() - &k * h) * p1;
    p.trace()
}

/// Choose the dependent-inflation weight by minimizing the trace of the fused
/// covariance with a golden-section search, comparing against both interval
/// endpoints.
pub fn optimize_omega(
    p_ind: &CovMatrix3,
    p_dep: &CovMatrix3,
    noise: &SplitNoise,
    h: &DMatrix<f64>,
) -> f64 {
    // No dependent measurement noise: inflating the state side is never
    // beneficial, so leave it untouched. Also covers the all-independent case
    // where any omega yields the Kalman result.
    if is_zero_mat(&noise.r_dep) {
        return 1.0;
    }
    // No dependent state mass: only the measurement side is inflated, and
    // its inflation 1/(1-omega) is smallest at the lower end.
    if is_zero_cov(p_dep) {
        return OMEGA_MIN;
    }

    let obj = |w: f64| fused_trace(p_ind, p_dep, noise, h, w);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = OMEGA_MIN;
    let mut b = OMEGA_MAX;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = obj(c);
    let mut fd = obj(d);
    while (b - a) > OMEGA_TOL {
        if (fc - fd).abs() <= 1e-12 * fc.abs().max(fd.abs()).max(1.0) {
            // Plateau: shrink symmetrically so a flat objective (identical
            // sources) resolves to the interval midpoint.
            a = c;
            b = d;
            c = b - inv_phi * (b - a);
            d = a + inv_phi * (b - a);
            fc = obj(c);
            fd = obj(d);
        } else if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = obj(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = obj(d);
        }
    }
    let mid = 0.5 * (a + b);
    // Fall back to an endpoint when the objective is smaller there.
    let candidates = [mid, OMEGA_MIN, OMEGA_MAX];
    let mut best = mid;
    let mut best_f = f64::INFINITY;
    for w in candidates {
        let f = obj(w);
        if f < best_f {
            best_f = f;
            best = w;
        }
    }
    best
}

/// Wrap the innovation component i when row i of H reads the heading
/// directly; those components are angle residuals.
fn wrap_innovation(innovation: &mut DVector<f64>, z: &DVector<f64>, hx: &DVector<f64>, h: &DMatrix<f64>) {
    for i in 0..h.nrows() {
        if h[(i, 0)] == 0.0 && h[(i, 1)] == 0.0 && h[(i, 2)] == 1.0 {
            innovation[i] = angle_diff(z[i], hx[i]);
        }
    }
}

/// Split CIF measurement update at a caller-supplied omega.
///
/// Errors when the innovation covariance is numerically singular; the caller
/// treats the measurement as discarded.
pub fn update_split_with_omega(
    state: &SplitState,
    z: &DVector<f64>,
    h: &DMatrix<f64>,
    noise: &SplitNoise,
    omega: f64,
) -> Result<SplitState> {
    let (p1, p2) = inflate(&state.p_ind, &state.p_dep, noise, omega);
    let s = h * p1 * h.transpose() + &p2;
    let s_sym = (&s + &s.transpose()) * 0.5;
    let eig = s_sym.clone().symmetric_eigen();
    let max_l = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_l = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_l > 0.0) || max_l / min_l > MAX_INNOVATION_COND {
        return Err(Error::SingularInnovation {
            cond: if min_l > 0.0 { max_l / min_l } else { f64::INFINITY },
        });
    }
    let s_inv = s_sym
        .try_inverse()
        .ok_or(Error::SingularInnovation { cond: f64::INFINITY })?;
    let k = p1 * h.transpose() * s_inv;

    let x1 = state.mean.as_vector();
    let hx = h * x1;
    let mut innovation = z - &hx;
    wrap_innovation(&mut innovation, z, &hx, h);
    let dx = &k * innovation;
    let mean = Pose2::new(x1[0] + dx[0], x1[1] + dx[1], x1[2] + dx[2]);

    let ikh_d = DMatrix::<f64>::identity(3, 3) - &k * h;
    let ikh = Matrix3::from_iterator(ikh_d.iter().cloned());
    let p_total = symmetrize(&(ikh * p1));
    let joseph = ikh * state.p_ind * ikh.transpose();
    let krk_d = &k * &noise.r_ind * k.transpose();
    let krk = Matrix3::from_iterator(krk_d.iter().cloned());
    let p_ind = symmetrize(&(joseph + krk));
    let p_dep = floor_psd(&(p_total - p_ind));

    Ok(SplitState {
        mean,
        p_ind,
        p_dep,
        epoch: state.epoch,
    })
}

/// Split CIF measurement update; omega comes from [`optimize_omega`].
pub fn update_split(
    state: &SplitState,
    z: &DVector<f64>,
    h: &DMatrix<f64>,
    noise: &SplitNoise,
) -> Result<SplitState> {
    let omega = optimize_omega(&state.p_ind, &state.p_dep, noise, h);
    update_split_with_omega(state, z, h, noise, omega)
}

/// Textbook Kalman update on the total covariance, used by tests and by the
/// EKF comparison method (dependent parts forced to zero).
pub fn kalman_update(
    mean: &Pose2,
    p: &CovMatrix3,
    z: &DVector<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<(Pose2, CovMatrix3)> {
    let noise = SplitNoise::independent(r.clone());
    let state = SplitState::new(*mean, *p, CovMatrix3::zeros(), 0);
    let out = update_split_with_omega(&state, z, h, &noise, 1.0)?;
    Ok((out.mean, out.total_cov()))
}
