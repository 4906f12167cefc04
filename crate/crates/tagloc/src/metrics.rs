//! Error statistics: per-epoch position errors, RMSE/Mean/STD summaries,
//! success rate, and proportional error reduction against a baseline.

use serde::{Deserialize, Serialize};

use crate::geometry::Pose2;
use crate::{Error, Result};

/// Default epoch-wise success threshold, meters.
pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 1.0;

/// Summary statistics over the present epochs of one method's track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub rmse: f64,
    pub mean: f64,
    /// Population standard deviation, so rmse^2 = mean^2 + std^2 exactly.
    pub std: f64,
    /// Fraction of truth epochs with error below the success threshold.
    /// Absent estimates count as failures.
    pub success_rate: f64,
    pub success_threshold: f64,
    pub present_epochs: usize,
    pub total_epochs: usize,
}

/// Per-epoch Euclidean position error; `None` where the method produced no
/// estimate.
pub fn position_errors(
    estimates: &[Option<Pose2>],
    truth: &[Pose2],
) -> Result<Vec<Option<f64>>> {
    if estimates.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: estimates.len(),
            right: truth.len(),
        });
    }
    Ok(estimates
        .iter()
        .zip(truth)
        .map(|(est, t)| est.map(|e| e.position_distance(t)))
        .collect())
}

/// RMSE / mean / population STD over present epochs, plus the epoch-wise
/// success rate over all truth epochs.
pub fn summarize(errors: &[Option<f64>], success_threshold: f64) -> Result<ErrorReport> {
    let present: Vec<f64> = errors.iter().filter_map(|e| *e).collect();
    if present.is_empty() {
        return Err(Error::EmptySeries);
    }
    let n = present.len() as f64;
    let mean = present.iter().sum::<f64>() / n;
    let msq = present.iter().map(|e| e * e).sum::<f64>() / n;
    let rmse = msq.sqrt();
    let var = (msq - mean * mean).max(0.0);
    let successes = errors
        .iter()
        .filter(|e| matches!(e, Some(v) if *v < success_threshold))
        .count();
    Ok(ErrorReport {
        rmse,
        mean,
        std: var.sqrt(),
        success_rate: successes as f64 / errors.len() as f64,
        success_threshold,
        present_epochs: present.len(),
        total_epochs: errors.len(),
    })
}

/// Percentage reduction of each statistic relative to the baseline;
/// `None` where the baseline statistic is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub rmse_pct: Option<f64>,
    pub mean_pct: Option<f64>,
    pub std_pct: Option<f64>,
}

pub fn proportional_reduction(baseline: &ErrorReport, method: &ErrorReport) -> ReductionReport {
    let pct = |b: f64, m: f64| {
        if b > 0.0 {
            Some((b - m) / b * 100.0)
        } else {
            None
        }
    };
    ReductionReport {
        rmse_pct: pct(baseline.rmse, method.rmse),
        mean_pct: pct(baseline.mean, method.mean),
        std_pct: pct(baseline.std, method.std),
    }
}

/// Median of a sample; used by the sweep summaries.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn errors_zero_when_exact() {
        let truth = vec![Pose2::new(1.0, 2.0, 0.1); 5];
        let est: Vec<Option<Pose2>> = truth.iter().cloned().map(Some).collect();
        let e = position_errors(&est, &truth).unwrap();
        assert!(e.iter().all(|x| x.unwrap() == 0.0));
    }

    #[test]
    fn constant_offset_errors() {
        let truth = vec![Pose2::identity(); 4];
        let est = vec![Some(Pose2::new(0.3, 0.0, 0.0)); 4];
        let e = position_errors(&est, &truth).unwrap();
        assert!(e.iter().all(|x| (x.unwrap() - 0.3).abs() < 1e-12));
        let rep = summarize(&e, 1.0).unwrap();
        assert!((rep.rmse - 0.3).abs() < 1e-12);
        assert!((rep.mean - 0.3).abs() < 1e-12);
        assert!(rep.std < 1e-12);
        assert_eq!(rep.success_rate, 1.0);
    }

    #[test]
    fn errors_match_direct_recompute() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let truth: Vec<Pose2> = (0..50)
            .map(|_| Pose2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), 0.0))
            .collect();
        let est: Vec<Option<Pose2>> = truth
            .iter()
            .map(|t| {
                if rng.gen_bool(0.2) {
                    None
                } else {
                    Some(Pose2::new(
                        t.x + rng.gen_range(-0.5..0.5),
                        t.y + rng.gen_range(-0.5..0.5),
                        0.0,
                    ))
                }
            })
            .collect();
        let e = position_errors(&est, &truth).unwrap();
        for i in 0..truth.len() {
            match (&est[i], &e[i]) {
                (Some(p), Some(err)) => {
                    let d = ((p.x - truth[i].x).powi(2) + (p.y - truth[i].y).powi(2)).sqrt();
                    assert!((d - err).abs() < 1e-12);
                }
                (None, None) => {}
                _ => panic!("presence mismatch"),
            }
        }
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let r = position_errors(&[None], &[Pose2::identity(), Pose2::identity()]);
        assert!(matches!(r, Err(Error::LengthMismatch { left: 1, right: 2 })));
    }

    #[test]
    fn two_point_summary() {
        let e = vec![Some(0.0), Some(2.0)];
        let rep = summarize(&e, 1.0).unwrap();
        assert!((rep.mean - 1.0).abs() < 1e-12);
        assert!((rep.rmse - 2f64.sqrt()).abs() < 1e-12);
        assert!((rep.std - 1.0).abs() < 1e-12);
        assert_eq!(rep.success_rate, 0.5);
    }

    #[test]
    fn empty_series_is_an_error() {
        assert!(matches!(summarize(&[None, None], 1.0), Err(Error::EmptySeries)));
        assert!(matches!(summarize(&[], 1.0), Err(Error::EmptySeries)));
    }

    #[test]
    fn rmse_identity_and_ordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..100 {
            let e: Vec<Option<f64>> = (0..20)
                .map(|_| Some(rng.gen_range(0.0..2.0)))
                .collect();
            let rep = summarize(&e, 1.0).unwrap();
            assert!((rep.rmse * rep.rmse - (rep.mean * rep.mean + rep.std * rep.std)).abs() < 1e-9);
            assert!(rep.rmse >= rep.mean - 1e-12);
        }
    }

    #[test]
    fn summarize_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let mut e: Vec<Option<f64>> = (0..30).map(|_| Some(rng.gen_range(0.0..2.0))).collect();
        let a = summarize(&e, 1.0).unwrap();
        e.shuffle(&mut rng);
        let b = summarize(&e, 1.0).unwrap();
        assert!((a.rmse - b.rmse).abs() < 1e-12);
        assert!((a.mean - b.mean).abs() < 1e-12);
        assert!((a.std - b.std).abs() < 1e-12);
    }

    fn report(rmse: f64, mean: f64, std: f64) -> ErrorReport {
        ErrorReport {
            rmse,
            mean,
            std,
            success_rate: 1.0,
            success_threshold: 1.0,
            present_epochs: 1,
            total_epochs: 1,
        }
    }

    #[test]
    fn reduction_cases() {
        let b = report(0.79, 0.5, 0.3);
        let same = proportional_reduction(&b, &b);
        assert!(same.rmse_pct.unwrap().abs() < 1e-12);
        // RMSE 0.79 down to 0.45 is a 43% reduction.
        let m = report(0.45, 0.5, 0.3);
        let r = proportional_reduction(&b, &m);
        assert!((r.rmse_pct.unwrap() - 43.0).abs() < 0.5);
        let zero = report(0.0, 0.0, 0.0);
        let r = proportional_reduction(&b, &zero);
        assert!((r.rmse_pct.unwrap() - 100.0).abs() < 1e-12);
        let r = proportional_reduction(&zero, &b);
        assert!(r.rmse_pct.is_none());
    }

    #[test]
    fn reduction_is_antisymmetric_around_baseline() {
        let b = report(1.0, 1.0, 1.0);
        let up = report(1.25, 1.0, 1.0);
        let down = report(0.75, 1.0, 1.0);
        let ru = proportional_reduction(&b, &up).rmse_pct.unwrap();
        let rd = proportional_reduction(&b, &down).rmse_pct.unwrap();
        assert!((ru + rd).abs() < 1e-12);
    }

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
