//! Per-cluster 3D translational velocity from ego-compensated Doppler, with
//! a velocity-adaptive residual gate and a conditioning check on the
//! line-of-sight geometry.

use crate::ego::EgoEstimate;
use crate::geometry::Vec3;
use crate::scan::{DopplerPoint, DopplerScan};
use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct VelocityParams {
    /// Gate scale: residuals beyond lambda_gate * |v_k| are outliers.
    pub lambda_gate: f64,
    /// Lower bound on the gate so slow objects are not gated to nothing (m/s).
    pub epsilon_floor: f64,
    /// Minimum inlier fraction below which the whole cluster is discarded.
    pub phi_min: f64,
    /// Minimum singular value of the stacked LOS rows for a reliable fit.
    pub sigma_min: f64,
}

impl Default for VelocityParams {
    fn default() -> Self {
        VelocityParams {
            lambda_gate: 0.2,
            epsilon_floor: 0.2,
            phi_min: 0.5,
            sigma_min: 0.05,
        }
    }
}

impl VelocityParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.phi_min > 0.0 && self.phi_min <= 1.0) {
            return Err("velocity.phi_min must be in (0, 1]".into());
        }
        if self.lambda_gate < 0.0 || self.epsilon_floor < 0.0 {
            return Err("velocity gate parameters must be >= 0".into());
        }
        Ok(())
    }
}

/// A retained dynamic object: member indices into the scan, reconstructed
/// translational velocity, and summary geometry.
#[derive(Debug, Clone)]
pub struct DynamicCluster {
    pub indices: Vec<usize>,
    pub velocity: Vec3,
    pub centroid: Vec3,
    pub aabb_min: Vec3,
    pub aabb_max: Vec3,
    pub inlier_fraction: f64,
    pub condition_ok: bool,
}

/// Ego-motion-compensated Doppler velocity:
/// s~ = s + u . (v_hat + omega_hat x p). Zero for perfectly static points
/// under an exact ego estimate.
pub fn compensate_doppler(point: &DopplerPoint, v_hat: &Vec3, omega_hat: &Vec3) -> f64 {
    point.doppler + point.los.dot(&(v_hat + omega_hat.cross(&point.position)))
}

/// Ordinary least squares fit of a cluster velocity to compensated Doppler
/// along each member's LOS, plus its residuals and conditioning.
#[derive(Debug, Clone)]
pub struct ClusterVelocityFit {
    pub velocity: Vec3,
    /// Residuals eps_i = u_i . v - s~_i.
    pub residuals: Vec<f64>,
    pub condition_ok: bool,
    /// Smallest singular value of the stacked LOS rows.
    pub sigma_min: f64,
}

/// Solves argmin_v sum (u_i . v - s~_i)^2 by the 3x3 normal equations.
/// `condition_ok` is false when the LOS rays are nearly coplanar or
/// parallel (smallest singular value <= sigma_min), in which case only the
/// radial component is observable and the fit is unreliable.
pub fn estimate_cluster_velocity(
    los: &[Vec3],
    compensated: &[f64],
    sigma_min_threshold: f64,
) -> ClusterVelocityFit {
    assert_eq!(los.len(), compensated.len());
    assert!(los.len() >= 3, "cluster velocity needs >= 3 points");
    let mut gram = Matrix3::<f64>::zeros();
    let mut rhs = Vec3::zeros();
    for (u, s) in los.iter().zip(compensated) {
        gram += u * u.transpose();
        rhs += u * *s;
    }
    let eig = SymmetricEigen::new(gram);
    // singular values of the stacked rows are sqrt of the Gram eigenvalues
    let sigma_min = eig.eigenvalues.min().max(0.0).sqrt();
    let condition_ok = sigma_min > sigma_min_threshold;
    let mut velocity = Vec3::zeros();
    for k in 0..3 {
        let l = eig.eigenvalues[k];
        if l > 1e-12 {
            let q: Vec3 = eig.eigenvectors.column(k).into();
            velocity += q * (q.dot(&rhs) / l);
        }
    }
    let residuals = los
        .iter()
        .zip(compensated)
        .map(|(u, s)| u.dot(&velocity) - s)
        .collect();
    ClusterVelocityFit {
        velocity,
        residuals,
        condition_ok,
        sigma_min,
    }
}

/// Applies the velocity-adaptive gate tau_v = max(lambda * |v|, floor) and
/// keeps the cluster when the inlier fraction reaches phi_min and the fit
/// is well conditioned. Gated-out members are appended to `noise`.
pub fn gate_cluster(
    scan: &DopplerScan,
    member_indices: &[usize],
    fit: &ClusterVelocityFit,
    params: &VelocityParams,
    noise: &mut Vec<usize>,
) -> Option<DynamicCluster> {
    let tau_v = (params.lambda_gate * fit.velocity.norm()).max(params.epsilon_floor);
    let mut kept = Vec::with_capacity(member_indices.len());
    for (pos, &idx) in member_indices.iter().enumerate() {
        if fit.residuals[pos].abs() <= tau_v {
            kept.push(idx);
        } else {
            noise.push(idx);
        }
    }
    let inlier_fraction = kept.len() as f64 / member_indices.len() as f64;
    if !fit.condition_ok || inlier_fraction < params.phi_min || kept.is_empty() {
        noise.extend(kept);
        return None;
    }
    let mut centroid = Vec3::zeros();
    let mut aabb_min = Vec3::repeat(f64::INFINITY);
    let mut aabb_max = Vec3::repeat(f64::NEG_INFINITY);
    for &i in &kept {
        let p = scan.points[i].position;
        centroid += p;
        for a in 0..3 {
            aabb_min[a] = aabb_min[a].min(p[a]);
            aabb_max[a] = aabb_max[a].max(p[a]);
        }
    }
    centroid /= kept.len() as f64;
    Some(DynamicCluster {
        indices: kept,
        velocity: fit.velocity,
        centroid,
        aabb_min,
        aabb_max,
        inlier_fraction,
        condition_ok: fit.condition_ok,
    })
}

/// Full reconstruction for one labeled cluster: compensate, fit, gate, and
/// refit once on the surviving members to shed outlier leverage.
pub fn reconstruct_cluster(
    scan: &DopplerScan,
    member_indices: &[usize],
    ego: &EgoEstimate,
    params: &VelocityParams,
    noise: &mut Vec<usize>,
) -> Option<DynamicCluster> {
    if member_indices.len() < 3 {
        noise.extend_from_slice(member_indices);
        return None;
    }
    let los: Vec<Vec3> = member_indices.iter().map(|&i| scan.points[i].los).collect();
    let comp: Vec<f64> = member_indices
        .iter()
        .map(|&i| compensate_doppler(&scan.points[i], &ego.v_hat, &ego.omega_hat))
        .collect();
    let fit = estimate_cluster_velocity(&los, &comp, params.sigma_min);
    let gated = gate_cluster(scan, member_indices, &fit, params, noise)?;
    if gated.indices.len() == member_indices.len() || gated.indices.len() < 3 {
        return Some(gated);
    }
    let los2: Vec<Vec3> = gated.indices.iter().map(|&i| scan.points[i].los).collect();
    let comp2: Vec<f64> = gated
        .indices
        .iter()
        .map(|&i| compensate_doppler(&scan.points[i], &ego.v_hat, &ego.omega_hat))
        .collect();
    let refit = estimate_cluster_velocity(&los2, &comp2, params.sigma_min);
    if !refit.condition_ok {
        noise.extend(gated.indices);
        return None;
    }
    Some(DynamicCluster {
        velocity: refit.velocity,
        ..gated
    })
}
