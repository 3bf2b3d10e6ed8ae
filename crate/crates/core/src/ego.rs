//! Ego-motion estimation from per-point Doppler velocity and the
//! distance-adaptive velocity filter separating static from dynamic points.
//!
//! The regression model for a static point is
//!
//! ```text
//! s_i = -u_i . (v + omega x p_i)
//! ```
//!
//! solved as robust linear least squares in the six twist unknowns via IRLS
//! with a Huber kernel. With line-of-sight vectors exactly radial
//! (u = p / |p|), the angular block of the design matrix vanishes
//! identically (u . (omega x p) = omega . (p x u) = 0), so omega is not
//! observable from a single scan's Doppler alone. The solver therefore
//! updates only the spectrally observable subspace and keeps the warm-start
//! prior in the remaining directions; registration later refines rotation
//! from geometry and the Doppler residual.

use crate::geometry::{Twist, Vec3};
use crate::scan::DopplerScan;
use nalgebra::{Matrix3, SymmetricEigen, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

type Matrix6 = nalgebra::Matrix6<f64>;

/// Relative eigenvalue cutoff separating observable directions from the
/// numerical null space of the normal equations.
const SPECTRAL_CUTOFF: f64 = 1e-9;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum EgoMotionError {
    #[error("degenerate LOS geometry: design matrix rank {rank} leaves the linear velocity unobservable")]
    DegenerateGeometry { rank: usize },
}

/// Velocity filter and IRLS parameters. The threshold tau(d) = tau0 + kappa*d
/// grows with range so that distant, noisier returns are not over-flagged.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct VelocityFilterParams {
    pub tau0: f64,
    pub kappa: f64,
    pub huber_delta: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// Extra refinement pass on the static subset after filtering.
    /// Off by default: the reference formulation runs a single robust fit.
    pub refit_on_static: bool,
}

impl Default for VelocityFilterParams {
    fn default() -> Self {
        VelocityFilterParams {
            tau0: 0.2,
            kappa: 0.01,
            huber_delta: 0.3,
            max_iters: 20,
            tol: 1e-6,
            refit_on_static: false,
        }
    }
}

impl VelocityFilterParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.tau0 > 0.0) {
            return Err("ego.tau0 must be > 0".into());
        }
        if self.kappa < 0.0 {
            return Err("ego.kappa must be >= 0".into());
        }
        if !(self.huber_delta > 0.0) {
            return Err("ego.huber_delta must be > 0".into());
        }
        if !(self.tol > 0.0) {
            return Err("ego.tol must be > 0".into());
        }
        Ok(())
    }
}

/// Result of the ego-motion fit: estimated twist, per-point residuals, and
/// the static/dynamic partition induced by the velocity filter.
#[derive(Debug, Clone)]
pub struct EgoEstimate {
    pub v_hat: Vec3,
    pub omega_hat: Vec3,
    /// Per-point residuals r_i = s_i + u_i . (v_hat + omega_hat x p_i).
    pub residuals: Vec<f64>,
    pub static_indices: Vec<usize>,
    pub dynamic_indices: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Retained spectral rank of the 6x6 normal equations.
    pub design_rank: usize,
    /// Robust objective after each accepted IRLS step.
    pub objective_trace: Vec<f64>,
}

impl EgoEstimate {
    pub fn twist(&self) -> Twist {
        Twist::new(self.omega_hat, self.v_hat)
    }
}

/// Doppler velocity induced at a static point by ego motion (v, omega):
/// -u . (v + omega x p). Negative for structure the sensor approaches.
pub fn predict_static_doppler(p: &Vec3, u: &Vec3, v: &Vec3, omega: &Vec3) -> f64 {
    -u.dot(&(v + omega.cross(p)))
}

fn residual_at(point_p: &Vec3, point_u: &Vec3, s: f64, x: &Vector6<f64>) -> f64 {
    let omega = Vec3::new(x[0], x[1], x[2]);
    let v = Vec3::new(x[3], x[4], x[5]);
    s + point_u.dot(&(v + omega.cross(point_p)))
}

fn huber_weight(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        1.0
    } else {
        delta / a
    }
}

fn huber_rho(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Robustly fits the sensor twist to all points of the scan, IRLS with a
/// Huber kernel, warm-started at `prior`. Residuals and the static/dynamic
/// partition are populated from the final estimate.
pub fn estimate_ego_motion(
    scan: &DopplerScan,
    prior: &Twist,
    params: &VelocityFilterParams,
) -> Result<EgoEstimate, EgoMotionError> {
    let n = scan.len();
    // rows of the linear model: a_i = [(p x u); u], residual = a_i . x + s_i
    let mut rows: Vec<Vector6<f64>> = Vec::with_capacity(n);
    let mut dopplers: Vec<f64> = Vec::with_capacity(n);
    for pt in &scan.points {
        let pu = pt.position.cross(&pt.los);
        rows.push(Vector6::new(
            pu.x, pu.y, pu.z, pt.los.x, pt.los.y, pt.los.z,
        ));
        dopplers.push(pt.doppler);
    }

    // Observability of v requires the LOS directions to span 3D.
    let mut gram_v = Matrix3::<f64>::zeros();
    for pt in &scan.points {
        gram_v += pt.los * pt.los.transpose();
    }
    let eig_v = SymmetricEigen::new(gram_v);
    let max_v = eig_v.eigenvalues.max().max(0.0);
    let rank_v = eig_v
        .eigenvalues
        .iter()
        .filter(|&&l| l > SPECTRAL_CUTOFF * max_v && l > 0.0)
        .count();
    if n < 6 || rank_v < 3 {
        let rank = design_rank(&rows, &vec![1.0; n]);
        return Err(EgoMotionError::DegenerateGeometry { rank });
    }

    let mut x = Vector6::new(
        prior.omega.x,
        prior.omega.y,
        prior.omega.z,
        prior.v.x,
        prior.v.y,
        prior.v.z,
    );
    let objective = |x: &Vector6<f64>| -> f64 {
        let mut obj = 0.0;
        for (i, row) in rows.iter().enumerate() {
            obj += huber_rho(row.dot(x) + dopplers[i], params.huber_delta);
        }
        obj
    };

    let mut obj = objective(&x);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;
    let mut rank = 0;
    for _ in 0..params.max_iters {
        iterations += 1;
        let weights: Vec<f64> = rows
            .iter()
            .enumerate()
            .map(|(i, row)| huber_weight(row.dot(&x) + dopplers[i], params.huber_delta))
            .collect();
        let (delta, r) = solve_weighted_step(&rows, &dopplers, &weights, &x);
        rank = r;
        let mut step = delta;
        let mut accepted = false;
        for _ in 0..=5 {
            let candidate = x + step;
            let cand_obj = objective(&candidate);
            if cand_obj <= obj {
                x = candidate;
                obj = cand_obj;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push(obj);
        if step.amax() < params.tol {
            converged = true;
            break;
        }
    }

    if params.refit_on_static {
        // one plain least-squares pass restricted to currently-static points
        let (stat, _) = partition(scan, &x, params);
        if stat.len() >= 6 {
            let mut weights = vec![0.0; n];
            for &i in &stat {
                weights[i] = 1.0;
            }
            let (delta, r) = solve_weighted_step(&rows, &dopplers, &weights, &x);
            x += delta;
            rank = r;
            obj = objective(&x);
            trace.push(obj);
        }
    }

    let omega_hat = Vec3::new(x[0], x[1], x[2]);
    let v_hat = Vec3::new(x[3], x[4], x[5]);
    let residuals: Vec<f64> = rows
        .iter()
        .enumerate()
        .map(|(i, row)| row.dot(&x) + dopplers[i])
        .collect();
    let (static_indices, dynamic_indices) = partition(scan, &x, params);
    Ok(EgoEstimate {
        v_hat,
        omega_hat,
        residuals,
        static_indices,
        dynamic_indices,
        iterations,
        converged,
        design_rank: rank,
        objective_trace: trace,
    })
}

/// One weighted normal-equation step from the current estimate, solved on
/// the observable subspace (spectral pseudo-inverse). Unobservable
/// directions receive a zero update, which pins them to the warm start.
fn solve_weighted_step(
    rows: &[Vector6<f64>],
    dopplers: &[f64],
    weights: &[f64],
    x: &Vector6<f64>,
) -> (Vector6<f64>, usize) {
    let mut gram = Matrix6::zeros();
    let mut rhs = Vector6::zeros();
    for (i, row) in rows.iter().enumerate() {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        gram += row * row.transpose() * w;
        rhs -= row * ((row.dot(x) + dopplers[i]) * w);
    }
    let eig = SymmetricEigen::new(gram);
    let max_eig = eig.eigenvalues.amax();
    if !(max_eig > 0.0) {
        return (Vector6::zeros(), 0);
    }
    let mut delta = Vector6::zeros();
    let mut rank = 0;
    for k in 0..6 {
        let l = eig.eigenvalues[k];
        if l > SPECTRAL_CUTOFF * max_eig {
            let q = eig.eigenvectors.column(k);
            delta += q * (q.dot(&rhs) / l);
            rank += 1;
        }
    }
    (delta, rank)
}

fn design_rank(rows: &[Vector6<f64>], weights: &[f64]) -> usize {
    let mut gram = Matrix6::zeros();
    for (i, row) in rows.iter().enumerate() {
        gram += row * row.transpose() * weights[i];
    }
    let eig = SymmetricEigen::new(gram);
    let max_eig = eig.eigenvalues.amax();
    if !(max_eig > 0.0) {
        return 0;
    }
    eig.eigenvalues
        .iter()
        .filter(|&&l| l > SPECTRAL_CUTOFF * max_eig)
        .count()
}

fn partition(
    scan: &DopplerScan,
    x: &Vector6<f64>,
    params: &VelocityFilterParams,
) -> (Vec<usize>, Vec<usize>) {
    let mut static_indices = Vec::new();
    let mut dynamic_indices = Vec::new();
    for (i, pt) in scan.points.iter().enumerate() {
        let r = residual_at(&pt.position, &pt.los, pt.doppler, x);
        let tau = params.tau0 + params.kappa * pt.position.norm();
        if r.abs() > tau {
            dynamic_indices.push(i);
        } else {
            static_indices.push(i);
        }
    }
    (static_indices, dynamic_indices)
}

/// Partitions scan points into (static, dynamic) index sets by comparing the
/// filter residual against tau(d) = tau0 + kappa * d.
pub fn velocity_filter(
    scan: &DopplerScan,
    v_hat: &Vec3,
    omega_hat: &Vec3,
    params: &VelocityFilterParams,
) -> (Vec<usize>, Vec<usize>) {
    let x = Vector6::new(
        omega_hat.x, omega_hat.y, omega_hat.z, v_hat.x, v_hat.y, v_hat.z,
    );
    partition(scan, &x, params)
}
