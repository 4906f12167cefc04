//! Tag-map construction by pose-graph optimization.
//!
//! The mapping robot's trajectory is anchored (known and fixed), so every
//! observation becomes a unary factor on one tag node: the residual is the
//! coordinate difference, wrapped in the angle, between the node pose and the
//! observed global pose compose(anchor, relative). Gauss-Newton with a
//! Levenberg damping fallback minimizes the information-weighted squared
//! residual sum.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{angle_diff, Pose2};
use crate::measurement::TagMap;

/// One relative tag observation taken from an anchored robot pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TagObservation {
    pub epoch: u64,
    pub tag_id: u32,
    pub relative_pose: Pose2,
    /// Information matrix of the observation (inverse covariance), stored as
    /// diagonal entries over (x, y, theta).
    pub info_diag: [f64; 3],
}

/// Anchored trajectory plus per-frame relative tag observations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MappingSession {
    pub robot_poses: Vec<(u64, Pose2)>,
    pub observations: Vec<TagObservation>,
}

/// Unary factor: the tag's global pose as seen from one anchor.
#[derive(Debug, Clone, Copy)]
pub struct Factor {
    pub tag_id: u32,
    pub observed_global: Pose2,
    pub info: Matrix3<f64>,
}

/// Factor graph over tag nodes. Robot poses are fixed, so the problem
/// decouples per tag, but the solver below works on the assembled normal
/// equations and does not rely on that.
#[derive(Debug, Clone, Default)]
pub struct TagGraph {
    pub nodes: BTreeMap<u32, Pose2>,
    pub factors: Vec<Factor>,
    /// Tags named in the session but excluded for lack of observations.
    pub skipped_tags: Vec<u32>,
}

/// Outcome statistics of an optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub converged: bool,
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
}

/// Build the graph: one node per observed tag, initialized from the first
/// observation; one unary factor per observation.
pub fn build_graph(session: &MappingSession) -> TagGraph {
    let anchors: BTreeMap<u64, Pose2> = session.robot_poses.iter().cloned().collect();
    let mut graph = TagGraph::default();
    for obs in &session.observations {
        let Some(anchor) = anchors.get(&obs.epoch) else {
            graph.skipped_tags.push(obs.tag_id);
            continue;
        };
        let global = anchor.compose(&obs.relative_pose);
        graph.nodes.entry(obs.tag_id).or_insert(global);
        graph.factors.push(Factor {
            tag_id: obs.tag_id,
            observed_global: global,
            info: Matrix3::from_diagonal(&Vector3::new(
                obs.info_diag[0],
                obs.info_diag[1],
                obs.info_diag[2],
            )),
        });
    }
    graph
}

fn residual(node: &Pose2, obs: &Pose2) -> Vector3<f64> {
    Vector3::new(
        node.x - obs.x,
        node.y - obs.y,
        angle_diff(node.theta, obs.theta),
    )
}

fn total_cost(nodes: &BTreeMap<u32, Pose2>, factors: &[Factor]) -> f64 {
    factors
        .iter()
        .map(|f| {
            let r = residual(&nodes[&f.tag_id], &f.observed_global);
            (r.transpose() * f.info * r)[0]
        })
        .sum()
}

/// Gauss-Newton with Levenberg damping on rejection. Returns the optimized
/// map and the run report; non-convergence is reported, not an error, and the
/// best iterate is still returned.
pub fn optimize(graph: &TagGraph, max_iters: usize, tol: f64) -> (TagMap, OptimizeReport) {
    let mut nodes = graph.nodes.clone();
    let initial_cost = total_cost(&nodes, &graph.factors);
    let mut cost = initial_cost;
    let mut lambda = 0.0f64;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..max_iters {
        iterations += 1;
        // Assemble per-node normal equations. The Jacobian of each unary
        // residual with respect to its node is the identity.
        let mut hessians: BTreeMap<u32, Matrix3<f64>> = BTreeMap::new();
        let mut gradients: BTreeMap<u32, Vector3<f64>> = BTreeMap::new();
        for f in &graph.factors {
            let r = residual(&nodes[&f.tag_id], &f.observed_global);
            *hessians.entry(f.tag_id).or_insert_with(Matrix3::zeros) += f.info;
            *gradients.entry(f.tag_id).or_insert_with(Vector3::zeros) += f.info * r;
        }

        let mut accepted = false;
        for _ in 0..8 {
            let mut trial = nodes.clone();
            let mut solvable = true;
            for (id, h) in &hessians {
                let damped = h + Matrix3::identity() * lambda;
                let Some(h_inv) = damped.try_inverse() else {
                    solvable = false;
                    break;
                };
                let step = -h_inv * gradients[id];
                let p = trial.get_mut(id).unwrap();
                *p = Pose2::new(p.x + step[0], p.y + step[1], p.theta + step[2]);
            }
            let trial_cost = if solvable {
                total_cost(&trial, &graph.factors)
            } else {
                f64::INFINITY
            };
            if trial_cost <= cost + 1e-15 {
                let improvement = cost - trial_cost;
                nodes = trial;
                cost = trial_cost;
                lambda = if lambda > 0.0 { lambda * 0.1 } else { 0.0 };
                accepted = true;
                if improvement < tol {
                    converged = true;
                }
                break;
            }
            lambda = if lambda > 0.0 { lambda * 10.0 } else { 1e-6 };
        }
        if !accepted {
            // Damping exhausted without improvement: treat as stalled.
            converged = true;
        }
        if converged {
            break;
        }
    }

    let map = TagMap {
        entries: nodes.into_iter().collect(),
    };
    (
        map,
        OptimizeReport {
            converged,
            iterations,
            initial_cost,
            final_cost: cost,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    fn session_one_obs() -> MappingSession {
        MappingSession {
            robot_poses: vec![(0, Pose2::new(1.0, 0.0, PI / 2.0))],
            observations: vec![TagObservation {
                epoch: 0,
                tag_id: 3,
                relative_pose: Pose2::new(2.0, 0.0, 0.0),
                info_diag: [1.0, 1.0, 1.0],
            }],
        }
    }

    #[test]
    fn single_observation_initializes_exactly() {
        let g = build_graph(&session_one_obs());
        let node = g.nodes[&3];
        assert!((node.x - 1.0).abs() < 1e-12);
        assert!((node.y - 2.0).abs() < 1e-12);
        assert!((node.theta - PI / 2.0).abs() < 1e-12);
        // A single observation per tag: optimize returns the init unchanged.
        let (map, report) = optimize(&g, 20, 1e-12);
        assert_eq!(map.entries[&3], node);
        assert!(report.converged);
    }

    #[test]
    fn conflicting_observations_meet_at_the_mean() {
        let session = MappingSession {
            robot_poses: vec![(0, Pose2::identity()), (1, Pose2::identity())],
            observations: vec![
                TagObservation {
                    epoch: 0,
                    tag_id: 1,
                    relative_pose: Pose2::new(1.0, 0.0, 0.2),
                    info_diag: [1.0, 1.0, 1.0],
                },
                TagObservation {
                    epoch: 1,
                    tag_id: 1,
                    relative_pose: Pose2::new(3.0, 2.0, -0.4),
                    info_diag: [1.0, 1.0, 1.0],
                },
            ],
        };
        let (map, report) = optimize(&build_graph(&session), 50, 1e-14);
        let p = map.entries[&1];
        assert!((p.x - 2.0).abs() < 1e-9);
        assert!((p.y - 1.0).abs() < 1e-9);
        assert!(angle_diff(p.theta, -0.1).abs() < 1e-9);
        assert!(report.converged);
    }

    #[test]
    fn wrapped_angle_mean_across_boundary() {
        // Two headings straddling +/-pi; the wrapped mean is near pi, not 0.
        let session = MappingSession {
            robot_poses: vec![(0, Pose2::identity()), (1, Pose2::identity())],
            observations: vec![
                TagObservation {
                    epoch: 0,
                    tag_id: 1,
                    relative_pose: Pose2::new(0.0, 0.0, PI - 0.1),
                    info_diag: [1.0, 1.0, 1.0],
                },
                TagObservation {
                    epoch: 1,
                    tag_id: 1,
                    relative_pose: Pose2::new(0.0, 0.0, -PI + 0.1),
                    info_diag: [1.0, 1.0, 1.0],
                },
            ],
        };
        let (map, _) = optimize(&build_graph(&session), 50, 1e-14);
        let th = map.entries[&1].theta;
        assert!(angle_diff(th, PI).abs() < 0.1 + 1e-9);
    }

    fn synthetic_session(
        rng: &mut ChaCha8Rng,
        n_tags: usize,
        obs_per_tag: usize,
        sigma_xy: f64,
        sigma_th: f64,
    ) -> (MappingSession, TagMap) {
        let mut truth = TagMap::default();
        for id in 0..n_tags as u32 {
            truth.entries.insert(
                id,
                Pose2::new(
                    rng.gen_range(-10.0..10.0),
                    rng.gen_range(-10.0..10.0),
                    rng.gen_range(-PI..PI),
                ),
            );
        }
        let n_xy = Normal::new(0.0, sigma_xy).unwrap();
        let n_th = Normal::new(0.0, sigma_th).unwrap();
        let mut session = MappingSession::default();
        let mut epoch = 0u64;
        for (&id, tag) in &truth.entries {
            for _ in 0..obs_per_tag {
                let anchor = Pose2::new(
                    rng.gen_range(-10.0..10.0),
                    rng.gen_range(-10.0..10.0),
                    rng.gen_range(-PI..PI),
                );
                session.robot_poses.push((epoch, anchor));
                let rel_true = anchor.inverse().compose(tag);
                let rel = Pose2::new(
                    rel_true.x + n_xy.sample(rng),
                    rel_true.y + n_xy.sample(rng),
                    rel_true.theta + n_th.sample(rng),
                );
                session.observations.push(TagObservation {
                    epoch,
                    tag_id: id,
                    relative_pose: rel,
                    info_diag: [
                        1.0 / (sigma_xy * sigma_xy).max(1e-12),
                        1.0 / (sigma_xy * sigma_xy).max(1e-12),
                        1.0 / (sigma_th * sigma_th).max(1e-12),
                    ],
                });
                epoch += 1;
            }
        }
        (session, truth)
    }

    #[test]
    fn zero_noise_recovers_tags_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let (session, truth) = synthetic_session(&mut rng, 10, 5, 0.0, 0.0);
        // Zero sigma would produce infinite information; use unit info.
        let session = MappingSession {
            robot_poses: session.robot_poses,
            observations: session
                .observations
                .into_iter()
                .map(|mut o| {
                    o.info_diag = [1.0, 1.0, 1.0];
                    o
                })
                .collect(),
        };
        let (map, report) = optimize(&build_graph(&session), 50, 1e-16);
        assert!(report.final_cost < 1e-16, "cost {}", report.final_cost);
        for (id, tag) in &truth.entries {
            let got = map.entries[id];
            assert!((got.x - tag.x).abs() < 1e-9);
            assert!((got.y - tag.y).abs() < 1e-9);
            assert!(angle_diff(got.theta, tag.theta).abs() < 1e-9);
        }
    }

    #[test]
    fn noisy_sessions_satisfy_sampling_bound() {
        // Position error of each optimized tag is the mean of obs_per_tag
        // i.i.d. errors; nearly all fall under 3 sigma / sqrt(n).
        let sigma_xy = 0.02;
        let sigma_th = 0.5f64.to_radians();
        let obs_per_tag = 5;
        let bound = 3.0 * sigma_xy / (obs_per_tag as f64).sqrt();
        let mut total = 0usize;
        let mut within = 0usize;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let (session, truth) =
                synthetic_session(&mut rng, 10, obs_per_tag, sigma_xy, sigma_th);
            let (map, _) = optimize(&build_graph(&session), 50, 1e-14);
            for (id, tag) in &truth.entries {
                total += 1;
                if map.entries[id].position_distance(tag) <= bound {
                    within += 1;
                }
            }
        }
        let frac = within as f64 / total as f64;
        assert!(frac >= 0.98, "only {frac:.3} of tags within the 3-sigma bound");
    }

    #[test]
    fn cost_is_nonincreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let (session, _) = synthetic_session(&mut rng, 5, 4, 0.05, 0.02);
        let g = build_graph(&session);
        let (map, report) = optimize(&g, 50, 1e-14);
        assert!(report.final_cost <= report.initial_cost + 1e-12);
        assert!(!map.entries.is_empty());
    }

    #[test]
    fn gauge_independence() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let (session, _) = synthetic_session(&mut rng, 6, 4, 0.02, 0.01);
        let (base_map, _) = optimize(&build_graph(&session), 50, 1e-14);
        let g = Pose2::new(3.0, -2.0, 0.8);
        let moved = MappingSession {
            robot_poses: session
                .robot_poses
                .iter()
                .map(|(e, p)| (*e, g.compose(p)))
                .collect(),
            observations: session.observations.clone(),
        };
        let (moved_map, _) = optimize(&build_graph(&moved), 50, 1e-14);
        for (id, p) in &base_map.entries {
            let expected = g.compose(p);
            let got = moved_map.entries[id];
            assert!((got.x - expected.x).abs() < 1e-9);
            assert!((got.y - expected.y).abs() < 1e-9);
            assert!(angle_diff(got.theta, expected.theta).abs() < 1e-9);
        }
    }

    #[test]
    fn observation_without_anchor_is_skipped() {
        let mut session = session_one_obs();
        session.observations.push(TagObservation {
            epoch: 99,
            tag_id: 4,
            relative_pose: Pose2::identity(),
            info_diag: [1.0, 1.0, 1.0],
        });
        let g = build_graph(&session);
        assert!(!g.nodes.contains_key(&4));
        assert_eq!(g.skipped_tags, vec![4]);
    }
}
