//! Doppler-aware ICP: nearest-neighbor correspondence search, a two-term
//! robust objective combining a point-to-plane geometry residual with a
//! rotation-only Doppler residual, and Gauss-Newton refinement on SE(3).
//!
//! Residuals per correspondence (i, j):
//!
//! ```text
//! r_g = n_j . (R p_i + t - q_j)          geometry, meters
//! r_v = u_j . R (s_i u_i) - s_j          Doppler, m/s
//! ```
//!
//! The Doppler term never reads the translation, so it constrains rotation
//! even where the geometry is repetitive or low-texture. Both terms carry
//! Tukey kernels; the balance is `lambda_v`. Increments apply on the left,
//! `T <- exp(delta) * T`, which keeps the Jacobians in the target frame
//! where the normals live.

use crate::geometry::{exp_se3, Pose, Twist, Vec3};
use crate::kdtree::KdTree;
use crate::predict::{PointOrigin, PredictedSource};
use crate::scan::{DopplerScan, NormalCloud};
use nalgebra::{SymmetricEigen, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

type Matrix6 = nalgebra::Matrix6<f64>;

/// Condition-number limit on the normal equations before the solver
/// switches to a damped (truncated-spectrum) step.
const MAX_CONDITION: f64 = 1e12;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("no correspondences within the search radius; clouds do not overlap")]
    NoOverlap,
    #[error("degenerate correspondence geometry: {0} usable pairs")]
    DegenerateDirections(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RegistrationParams {
    /// Balance between geometry and Doppler terms, in [0, 1].
    pub lambda_v: f64,
    /// Tukey scale for the geometry residual (meters).
    pub tukey_g: f64,
    /// Tukey scale for the Doppler residual (m/s).
    pub tukey_v: f64,
    /// Base nearest-neighbor acceptance radius (meters), inflated per
    /// cluster by the rotational slippage bound.
    pub max_corr_dist: f64,
    pub max_iters: usize,
    pub rot_tol: f64,
    pub trans_tol: f64,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        RegistrationParams {
            lambda_v: 0.2,
            tukey_g: 0.5,
            tukey_v: 0.3,
            max_corr_dist: 1.0,
            max_iters: 50,
            rot_tol: 1e-5,
            trans_tol: 1e-5,
        }
    }
}

impl RegistrationParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.lambda_v) {
            return Err("registration.lambda_v must be in [0, 1]".into());
        }
        if !(self.tukey_g > 0.0 && self.tukey_v > 0.0) {
            return Err("registration Tukey scales must be > 0".into());
        }
        if !(self.max_corr_dist > 0.0 && self.rot_tol > 0.0 && self.trans_tol > 0.0) {
            return Err("registration tolerances must be > 0".into());
        }
        Ok(())
    }
}

/// A matched source/target pair from nearest-neighbor search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub source: usize,
    pub target: usize,
    pub distance: f64,
    /// Acceptance radius in effect for this pair (base + cluster slippage).
    pub radius: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct IterationStats {
    pub correspondences: usize,
    pub cost_before: f64,
    pub cost_after: f64,
    pub rot_step: f64,
    pub trans_step: f64,
    pub damped: bool,
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    pub pose: Pose,
    pub iterations: usize,
    pub converged: bool,
    pub final_cost: f64,
    pub correspondence_count: usize,
    pub iteration_stats: Vec<IterationStats>,
    /// RMS of the geometry residual over the final pair set (meters).
    pub rms_geometry: f64,
    /// RMS of the Doppler residual over the final pair set (m/s).
    pub rms_doppler: f64,
}

/// Point-to-plane residual of a pair under pose T: n . (R p + t - q).
pub fn geometry_residual(source_point: &Vec3, target_point: &Vec3, normal: &Vec3, pose: &Pose) -> f64 {
    normal.dot(&(pose.apply(source_point) - target_point))
}

/// Doppler residual of a pair: u_j . R (s_i u_i) - s_j. Reads only the
/// rotation; any translation yields the identical value.
pub fn doppler_residual(
    source_los: &Vec3,
    source_doppler: f64,
    target_los: &Vec3,
    target_doppler: f64,
    pose: &Pose,
) -> f64 {
    target_los.dot(&(pose.rotation * (source_los * source_doppler))) - target_doppler
}

/// Analytic Jacobian of the geometry residual w.r.t. a left perturbation
/// exp([d_omega, d_v]) * T, as [d/d_omega | d/d_v].
pub fn geometry_jacobian(source_point: &Vec3, normal: &Vec3, pose: &Pose) -> Vector6<f64> {
    let y = pose.apply(source_point);
    let rot_part = y.cross(normal);
    Vector6::new(rot_part.x, rot_part.y, rot_part.z, normal.x, normal.y, normal.z)
}

/// Analytic Jacobian of the Doppler residual under the same perturbation.
/// The translation block is identically zero.
pub fn doppler_jacobian(source_los: &Vec3, source_doppler: f64, target_los: &Vec3, pose: &Pose) -> Vector6<f64> {
    let rotated = pose.rotation * (source_los * source_doppler);
    let rot_part = rotated.cross(target_los);
    Vector6::new(rot_part.x, rot_part.y, rot_part.z, 0.0, 0.0, 0.0)
}

/// Tukey weight: (1 - (r/c)^2)^2 inside the scale, 0 beyond it.
pub fn tukey_weight(r: f64, c: f64) -> f64 {
    let x = r / c;
    if x.abs() >= 1.0 {
        0.0
    } else {
        let t = 1.0 - x * x;
        t * t
    }
}

/// Tukey loss matching [`tukey_weight`]: c^2/6 (1 - (1 - (r/c)^2)^3),
/// saturating at c^2/6.
pub fn tukey_rho(r: f64, c: f64) -> f64 {
    let x = r / c;
    let cap = c * c / 6.0;
    if x.abs() >= 1.0 {
        cap
    } else {
        let t = 1.0 - x * x;
        cap * (1.0 - t * t * t)
    }
}

/// Nearest-neighbor pairs of the transformed source against the target,
/// keeping pairs within the (per-cluster inflated) radius whose target
/// normal is valid. Errors when nothing matches.
pub fn find_correspondences(
    source: &PredictedSource,
    target: &DopplerScan,
    tree: &KdTree,
    normals: &NormalCloud,
    pose: &Pose,
    params: &RegistrationParams,
) -> Result<Vec<Correspondence>, RegistrationError> {
    let pairs: Vec<Correspondence> = (0..source.len())
        .into_par_iter()
        .filter_map(|i| {
            let moved = pose.apply(&source.points[i]);
            let (j, d2) = tree.nearest(&moved)?;
            let radius = params.max_corr_dist + source.slippage_of(source.origin[i]);
            let distance = d2.sqrt();
            if distance <= radius && normals.is_valid(j) {
                Some(Correspondence {
                    source: i,
                    target: j,
                    distance,
                    radius,
                })
            } else {
                None
            }
        })
        .collect();
    if pairs.is_empty() {
        return Err(RegistrationError::NoOverlap);
    }
    let _ = target;
    Ok(pairs)
}

fn robust_cost(
    pairs: &[Correspondence],
    source: &PredictedSource,
    target: &DopplerScan,
    normals: &NormalCloud,
    pose: &Pose,
    params: &RegistrationParams,
) -> f64 {
    let mut cost = 0.0;
    for pair in pairs {
        let q = &target.points[pair.target];
        let n = normals.get(pair.target).expect("pair has valid normal");
        let rg = geometry_residual(&source.points[pair.source], &q.position, n, pose);
        cost += (1.0 - params.lambda_v) * tukey_rho(rg, params.tukey_g);
        if params.lambda_v > 0.0 {
            let rv = doppler_residual(
                &source.los[pair.source],
                source.doppler[pair.source],
                &q.los,
                q.doppler,
                pose,
            );
            cost += params.lambda_v * tukey_rho(rv, params.tukey_v);
        }
    }
    cost
}

/// One Gauss-Newton step of the two-term IRLS objective on the given pair
/// set. Returns the twist increment and whether damping engaged.
pub fn solve_increment(
    pairs: &[Correspondence],
    source: &PredictedSource,
    target: &DopplerScan,
    normals: &NormalCloud,
    pose: &Pose,
    params: &RegistrationParams,
) -> Result<(Twist, bool), RegistrationError> {
    if pairs.len() < 6 {
        return Err(RegistrationError::DegenerateDirections(pairs.len()));
    }
    let mut h = Matrix6::zeros();
    let mut g = Vector6::<f64>::zeros();
    for pair in pairs {
        let q = &target.points[pair.target];
        let n = normals.get(pair.target).expect("pair has valid normal");
        let p = &source.points[pair.source];

        let rg = geometry_residual(p, &q.position, n, pose);
        let wg = (1.0 - params.lambda_v) * tukey_weight(rg, params.tukey_g);
        if wg > 0.0 {
            let j = geometry_jacobian(p, n, pose);
            h += j * j.transpose() * wg;
            g += j * (rg * wg);
        }

        if params.lambda_v > 0.0 {
            let rv = doppler_residual(
                &source.los[pair.source],
                source.doppler[pair.source],
                &q.los,
                q.doppler,
                pose,
            );
            let wv = params.lambda_v * tukey_weight(rv, params.tukey_v);
            if wv > 0.0 {
                let j = doppler_jacobian(&source.los[pair.source], source.doppler[pair.source], &q.los, pose);
                h += j * j.transpose() * wv;
                g += j * (rv * wv);
            }
        }
    }

    let eig = SymmetricEigen::new(h);
    let max_eig = eig.eigenvalues.max();
    if !(max_eig > 0.0) {
        return Err(RegistrationError::DegenerateDirections(pairs.len()));
    }
    let min_eig = eig.eigenvalues.min();
    let damped = !(min_eig > 0.0) || max_eig / min_eig > MAX_CONDITION;
    let mut delta = Vector6::zeros();
    for k in 0..6 {
        let l = eig.eigenvalues[k];
        // damped retry: directions below the conditioning floor get no update
        if l > max_eig / MAX_CONDITION {
            let q = eig.eigenvectors.column(k);
            delta -= q * (q.dot(&g) / l);
        }
    }
    Ok((
        Twist::new(
            Vec3::new(delta[0], delta[1], delta[2]),
            Vec3::new(delta[3], delta[4], delta[5]),
        ),
        damped,
    ))
}

/// Full alternation of correspondence search and Gauss-Newton refinement.
/// Terminates when both the rotation and translation increments drop below
/// their tolerances; the robust cost is non-increasing across accepted
/// iterations (steps that raise it are halved, then the loop stops).
pub fn register(
    source: &PredictedSource,
    target: &DopplerScan,
    normals: &NormalCloud,
    init: &Pose,
    params: &RegistrationParams,
) -> Result<RegistrationResult, RegistrationError> {
    assert!(!source.is_empty() && !target.is_empty(), "empty clouds");
    let tree = KdTree::build(&target.positions());
    let mut pose = *init;
    let mut iterations = 0;
    let mut converged = false;
    let mut stats = Vec::new();
    let mut pairs = Vec::new();
    let mut stalled = 0u32;
    for _ in 0..params.max_iters {
        iterations += 1;
        pairs = find_correspondences(source, target, &tree, normals, &pose, params)?;
        let cost_before = robust_cost(&pairs, source, target, normals, &pose, params);
        let (delta, damped) = solve_increment(&pairs, source, target, normals, &pose, params)?;

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=5 {
            let step = delta.scaled(scale);
            let candidate = exp_se3(&step, 1.0)
                .expect("finite increment")
                .compose(&pose);
            let cost_after = robust_cost(&pairs, source, target, normals, &candidate, params);
            if cost_after <= cost_before {
                accepted = Some((candidate, step, cost_after));
                break;
            }
            scale *= 0.5;
        }
        let Some((next_pose, step, cost_after)) = accepted else {
            stats.push(IterationStats {
                correspondences: pairs.len(),
                cost_before,
                cost_after: cost_before,
                rot_step: 0.0,
                trans_step: 0.0,
                damped,
            });
            break;
        };
        pose = next_pose;
        let rot_step = step.omega.norm();
        let trans_step = step.v.norm();
        stats.push(IterationStats {
            correspondences: pairs.len(),
            cost_before,
            cost_after,
            rot_step,
            trans_step,
            damped,
        });
        if rot_step < params.rot_tol && trans_step < params.trans_tol {
            converged = true;
            break;
        }
        // correspondence flips on a plateau can cycle without the increment
        // ever reaching the tolerances; stop burning iterations there
        if cost_before - cost_after <= 1e-10 * cost_before.max(1.0) {
            stalled += 1;
            if stalled >= 3 {
                break;
            }
        } else {
            stalled = 0;
        }
    }

    let mut sum_g2 = 0.0;
    let mut sum_v2 = 0.0;
    for pair in &pairs {
        let q = &target.points[pair.target];
        let n = normals.get(pair.target).expect("pair has valid normal");
        let rg = geometry_residual(&source.points[pair.source], &q.position, n, &pose);
        let rv = doppler_residual(
            &source.los[pair.source],
            source.doppler[pair.source],
            &q.los,
            q.doppler,
            &pose,
        );
        sum_g2 += rg * rg;
        sum_v2 += rv * rv;
    }
    let n_pairs = pairs.len().max(1) as f64;
    Ok(RegistrationResult {
        pose,
        iterations,
        converged,
        final_cost: robust_cost(&pairs, source, target, normals, &pose, params),
        correspondence_count: pairs.len(),
        iteration_stats: stats,
        rms_geometry: (sum_g2 / n_pairs).sqrt(),
        rms_doppler: (sum_v2 / n_pairs).sqrt(),
    })
}

/// Wraps a plain scan as an untouched source set, for registering a raw
/// pair of clouds without the dynamic pipeline.
pub fn source_from_scan(scan: &DopplerScan) -> PredictedSource {
    PredictedSource {
        points: scan.points.iter().map(|p| p.position).collect(),
        los: scan.points.iter().map(|p| p.los).collect(),
        doppler: scan.points.iter().map(|p| p.doppler).collect(),
        origin: vec![PointOrigin::Static; scan.len()],
        cluster_slippage: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rot3;
    use crate::scan::{estimate_normals, DopplerPoint};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn room_scan(n_side: usize) -> DopplerScan {
        // three mutually orthogonal walls around the sensor
        let mut pts = Vec::new();
        let step = 0.4;
        let half = n_side as f64 * step / 2.0;
        for i in 0..n_side {
            for j in 0..n_side {
                let a = i as f64 * step - half;
                let b = j as f64 * step - half;
                for p in [
                    Vec3::new(8.0, a, b),
                    Vec3::new(a, 9.0, b),
                    Vec3::new(a, b, 7.0),
                ] {
                    pts.push(DopplerPoint {
                        position: p,
                        los: p / p.norm(),
                        doppler: 0.0,
                    });
                }
            }
        }
        DopplerScan::new(0.0, pts)
    }

    fn random_pose(rng: &mut StdRng, angle: f64, trans: f64) -> Pose {
        let axis = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        let t = if trans > 0.0 {
            Vec3::new(
                rng.random_range(-trans..trans),
                rng.random_range(-trans..trans),
                rng.random_range(-trans..trans),
            )
        } else {
            Vec3::zeros()
        };
        Pose::new(Rot3::from_axis_angle(&axis, rng.random_range(-angle..angle)), t)
    }

    #[test]
    fn residual_identities() {
        let n = Vec3::new(0.0, 0.0, 1.0);
        let q = Vec3::new(1.0, 2.0, 5.0);
        let id = Pose::identity();
        // point on its matched plane
        assert_eq!(geometry_residual(&Vec3::new(3.0, -1.0, 5.0), &q, &n, &id), 0.0);
        // offset along the normal
        assert!((geometry_residual(&Vec3::new(3.0, -1.0, 5.3), &q, &n, &id) - 0.3).abs() < 1e-12);
        // tangential slide is invisible to point-to-plane
        assert_eq!(geometry_residual(&Vec3::new(9.0, 4.0, 5.0), &q, &n, &id), 0.0);

        let u = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(doppler_residual(&u, 3.0, &u, 3.0, &id), 0.0);
        assert_eq!(doppler_residual(&u, 0.0, &Vec3::new(0.0, 1.0, 0.0), 0.0, &id), 0.0);
    }

    #[test]
    fn doppler_residual_ignores_translation_bitwise() {
        let mut rng = StdRng::seed_from_u64(103);
        for _ in 0..200 {
            let ui = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let uj = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let si = rng.random_range(-30.0..30.0);
            let sj = rng.random_range(-30.0..30.0);
            let rot = random_pose(&mut rng, 0.5, 0.0).rotation;
            let base = doppler_residual(&ui, si, &uj, sj, &Pose::new(rot, Vec3::zeros()));
            for _ in 0..10 {
                let t = Vec3::new(
                    rng.random_range(-100.0..100.0),
                    rng.random_range(-100.0..100.0),
                    rng.random_range(-100.0..100.0),
                );
                let r = doppler_residual(&ui, si, &uj, sj, &Pose::new(rot, t));
                assert_eq!(r.to_bits(), base.to_bits());
            }
        }
    }

    /// Central finite differences of a residual under left perturbation.
    fn fd_jacobian<F: Fn(&Pose) -> f64>(f: F, pose: &Pose) -> Vector6<f64> {
        let eps = 1e-5;
        let mut j = Vector6::zeros();
        for k in 0..6 {
            let mut xi = Vector6::zeros();
            xi[k] = eps;
            let perturb = |sign: f64| {
                let tw = Twist::new(
                    Vec3::new(xi[0], xi[1], xi[2]) * sign,
                    Vec3::new(xi[3], xi[4], xi[5]) * sign,
                );
                exp_se3(&tw, 1.0).unwrap().compose(pose)
            };
            j[k] = (f(&perturb(1.0)) - f(&perturb(-1.0))) / (2.0 * eps);
        }
        j
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = StdRng::seed_from_u64(107);
        for _ in 0..200 {
            let pose = random_pose(&mut rng, 0.5, 2.0);
            let p = Vec3::new(
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
            );
            let q = Vec3::new(
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
            );
            let n = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let an = geometry_jacobian(&p, &n, &pose);
            let fd = fd_jacobian(|t| geometry_residual(&p, &q, &n, t), &pose);
            for k in 0..6 {
                assert!(
                    (an[k] - fd[k]).abs() <= 1e-6 * (1.0 + an[k].abs()),
                    "geometry jacobian[{k}]: {} vs {}",
                    an[k],
                    fd[k]
                );
            }

            let ui = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let uj = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let si = rng.random_range(-30.0..30.0);
            let an = doppler_jacobian(&ui, si, &uj, &pose);
            let fd = fd_jacobian(|t| doppler_residual(&ui, si, &uj, 0.0, t), &pose);
            for k in 0..6 {
                assert!(
                    (an[k] - fd[k]).abs() <= 1e-6 * (1.0 + an[k].abs()),
                    "doppler jacobian[{k}]: {} vs {}",
                    an[k],
                    fd[k]
                );
            }
        }
    }

    #[test]
    fn identical_clouds_converge_immediately() {
        let scan = room_scan(20);
        let normals = estimate_normals(&scan, 8, 2.0);
        let source = source_from_scan(&scan);
        let result = register(
            &source,
            &scan,
            &normals,
            &Pose::identity(),
            &RegistrationParams::default(),
        )
        .unwrap();
        assert!(result.converged);
        assert_eq!(result.iterations, 1);
        assert!(result.pose.translation.norm() < 1e-12);
    }

    #[test]
    fn far_apart_clouds_report_no_overlap() {
        let scan = room_scan(10);
        let normals = estimate_normals(&scan, 8, 2.0);
        let mut source = source_from_scan(&scan);
        for p in &mut source.points {
            *p += Vec3::new(500.0, 0.0, 0.0);
        }
        let err = register(
            &source,
            &scan,
            &normals,
            &Pose::identity(),
            &RegistrationParams::default(),
        )
        .unwrap_err();
        assert_eq!(err, RegistrationError::NoOverlap);
    }

    #[test]
    fn correspondences_satisfy_nearest_neighbor_property() {
        let mut rng = StdRng::seed_from_u64(109);
        let scan = room_scan(12);
        let normals = estimate_normals(&scan, 8, 2.0);
        let source = source_from_scan(&scan);
        let pose = random_pose(&mut rng, 0.01, 0.05);
        let tree = KdTree::build(&scan.positions());
        let pairs = find_correspondences(
            &source,
            &scan,
            &tree,
            &normals,
            &pose,
            &RegistrationParams::default(),
        )
        .unwrap();
        let positions = scan.positions();
        for pair in pairs {
            let moved = pose.apply(&source.points[pair.source]);
            let brute = positions
                .iter()
                .map(|q| (moved - q).norm())
                .fold(f64::INFINITY, f64::min);
            assert!((pair.distance - brute).abs() < 1e-9);
            assert!(pair.distance <= pair.radius);
        }
    }

    #[test]
    fn recovers_known_transform() {
        let target = room_scan(30);
        let normals = estimate_normals(&target, 10, 2.0);
        // source = target moved by the inverse of T*: registering source
        // onto target must recover T*.
        let t_star = Pose::new(
            Rot3::from_axis_angle(&Vec3::z(), 2.0f64.to_radians()),
            Vec3::new(0.4, -0.2, 0.1),
        );
        let inv = t_star.inverse();
        let mut source = source_from_scan(&target);
        for p in &mut source.points {
            *p = inv.apply(p);
        }
        let result = register(
            &source,
            &target,
            &normals,
            &Pose::identity(),
            &RegistrationParams {
                lambda_v: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(result.converged);
        let dt = (result.pose.translation - t_star.translation).norm();
        let dr = (result.pose.rotation.transpose() * t_star.rotation).angle();
        assert!(dt < 1e-4, "translation error {dt}");
        assert!(dr.to_degrees() < 0.01, "rotation error {} deg", dr.to_degrees());
    }

    #[test]
    fn pure_rotation_increment_from_doppler_only() {
        // lambda_v = 1 with nonzero doppler: the increment has no
        // translation component because dr_v/dt = 0
        let mut rng = StdRng::seed_from_u64(113);
        let mut scan = room_scan(10);
        let ego_v = Vec3::new(10.0, 0.0, 0.0);
        for p in &mut scan.points {
            p.doppler = -p.los.dot(&ego_v);
        }
        let normals = estimate_normals(&scan, 8, 2.0);
        let source = source_from_scan(&scan);
        let tree = KdTree::build(&scan.positions());
        let pose = random_pose(&mut rng, 0.02, 0.0);
        let params = RegistrationParams {
            lambda_v: 1.0,
            tukey_v: 50.0,
            ..Default::default()
        };
        let pairs =
            find_correspondences(&source, &scan, &tree, &normals, &pose, &params).unwrap();
        let (delta, _) = solve_increment(&pairs, &source, &scan, &normals, &pose, &params).unwrap();
        assert!(delta.v.norm() < 1e-12, "translation leaked: {:?}", delta.v);
    }

    #[test]
    fn cost_trace_non_increasing_per_iteration() {
        let target = room_scan(20);
        let normals = estimate_normals(&target, 10, 2.0);
        let t_star = Pose::new(
            Rot3::from_axis_angle(&Vec3::y(), 1.5f64.to_radians()),
            Vec3::new(0.3, 0.2, -0.1),
        );
        let inv = t_star.inverse();
        let mut source = source_from_scan(&target);
        for p in &mut source.points {
            *p = inv.apply(p);
        }
        let result = register(
            &source,
            &target,
            &normals,
            &Pose::identity(),
            &RegistrationParams::default(),
        )
        .unwrap();
        for s in &result.iteration_stats {
            assert!(s.cost_after <= s.cost_before + 1e-12);
        }
    }
}
