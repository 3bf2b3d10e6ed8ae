//! Constant-velocity warp of dynamic clusters into the next frame and
//! assembly of the source set passed to matching.
//!
//! Predicted points carry their measured LOS and Doppler unchanged; the
//! Doppler matching term consumes the raw source measurement.

use crate::geometry::Vec3;
use crate::object_velocity::DynamicCluster;
use crate::scan::DopplerScan;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PredictionParams {
    /// Worst-case unobserved object spin rate (rad/s) for the rotational
    /// slippage bound inflating per-cluster correspondence radii.
    pub omega_max: f64,
    /// Treat velocity-filter noise and discarded-cluster points as static
    /// for matching instead of dropping them.
    pub include_noise_as_static: bool,
}

impl Default for PredictionParams {
    fn default() -> Self {
        PredictionParams {
            omega_max: 1.0,
            include_noise_as_static: true,
        }
    }
}

/// Where a source point came from: untouched static background or a
/// predicted dynamic cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointOrigin {
    Static,
    Cluster(usize),
}

/// The motion-compensated source set: static points bitwise-equal to their
/// originals plus dynamic points advanced by their cluster velocity.
#[derive(Debug, Clone)]
pub struct PredictedSource {
    pub points: Vec<Vec3>,
    pub los: Vec<Vec3>,
    pub doppler: Vec<f64>,
    pub origin: Vec<PointOrigin>,
    /// Correspondence-radius inflation per cluster id, from the rotational
    /// slippage bound.
    pub cluster_slippage: Vec<f64>,
}

impl PredictedSource {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Extra correspondence radius for the cluster a point belongs to.
    pub fn slippage_of(&self, origin: PointOrigin) -> f64 {
        match origin {
            PointOrigin::Static => 0.0,
            PointOrigin::Cluster(k) => self.cluster_slippage[k],
        }
    }
}

/// Constant-velocity prediction: p + v * dt for every cluster member.
pub fn predict_points(positions: &[Vec3], velocity: &Vec3, dt: f64) -> Vec<Vec3> {
    positions.iter().map(|p| p + velocity * dt).collect()
}

/// Worst-case per-point displacement from an unmodeled rotation up to
/// `omega_max`: omega_max * max_i |p_i - c| * dt.
pub fn slippage_bound(positions: &[Vec3], centroid: &Vec3, omega_max: f64, dt: f64) -> f64 {
    let max_radius = positions
        .iter()
        .map(|p| (p - centroid).norm())
        .fold(0.0f64, f64::max);
    omega_max * max_radius * dt
}

/// Builds the source set for matching: statics stay in place, retained
/// clusters are warped by their velocities, and each point carries an
/// origin tag so correspondence search can inflate per-cluster radii.
pub fn build_source_set(
    scan: &DopplerScan,
    static_indices: &[usize],
    noise_indices: &[usize],
    clusters: &[DynamicCluster],
    dt: f64,
    params: &PredictionParams,
) -> PredictedSource {
    let mut n = static_indices.len() + clusters.iter().map(|c| c.indices.len()).sum::<usize>();
    if params.include_noise_as_static {
        n += noise_indices.len();
    }
    let mut out = PredictedSource {
        points: Vec::with_capacity(n),
        los: Vec::with_capacity(n),
        doppler: Vec::with_capacity(n),
        origin: Vec::with_capacity(n),
        cluster_slippage: Vec::with_capacity(clusters.len()),
    };
    let push_static = |i: usize, out: &mut PredictedSource| {
        let pt = &scan.points[i];
        out.points.push(pt.position);
        out.los.push(pt.los);
        out.doppler.push(pt.doppler);
        out.origin.push(PointOrigin::Static);
    };
    for &i in static_indices {
        push_static(i, &mut out);
    }
    if params.include_noise_as_static {
        for &i in noise_indices {
            push_static(i, &mut out);
        }
    }
    for (k, cluster) in clusters.iter().enumerate() {
        let positions: Vec<Vec3> = cluster
            .indices
            .iter()
            .map(|&i| scan.points[i].position)
            .collect();
        out.cluster_slippage.push(slippage_bound(
            &positions,
            &cluster.centroid,
            params.omega_max,
            dt,
        ));
        for (&i, predicted) in cluster
            .indices
            .iter()
            .zip(predict_points(&positions, &cluster.velocity, dt))
        {
            out.points.push(predicted);
            out.los.push(scan.points[i].los);
            out.doppler.push(scan.points[i].doppler);
            out.origin.push(PointOrigin::Cluster(k));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scan::DopplerPoint;

    fn test_scan(n: usize) -> DopplerScan {
        let points = (0..n)
            .map(|i| {
                let p = Vec3::new(5.0 + i as f64, 1.0, 0.5);
                DopplerPoint {
                    position: p,
                    los: p / p.norm(),
                    doppler: -3.0,
                }
            })
            .collect();
        DopplerScan::new(0.0, points)
    }

    fn test_cluster(indices: Vec<usize>, scan: &DopplerScan, velocity: Vec3) -> DynamicCluster {
        let centroid = indices
            .iter()
            .fold(Vec3::zeros(), |a, &i| a + scan.points[i].position)
            / indices.len() as f64;
        DynamicCluster {
            indices,
            velocity,
            centroid,
            aabb_min: Vec3::zeros(),
            aabb_max: Vec3::zeros(),
            inlier_fraction: 1.0,
            condition_ok: true,
        }
    }

    #[test]
    fn predict_shifts_by_velocity() {
        let pts = vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(-1.0, 0.0, 1.0)];
        let moved = predict_points(&pts, &Vec3::new(5.0, 0.0, 0.0), 0.1);
        assert_eq!(moved[0], Vec3::new(1.5, 2.0, 3.0));
        assert_eq!(moved[1], Vec3::new(-0.5, 0.0, 1.0));
        // zero velocity leaves points untouched
        let still = predict_points(&pts, &Vec3::zeros(), 0.1);
        assert_eq!(still, pts);
    }

    #[test]
    fn slippage_bound_values() {
        let c = Vec3::zeros();
        let pts = vec![Vec3::new(2.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)];
        assert_eq!(slippage_bound(&pts, &c, 0.0, 0.1), 0.0);
        assert!((slippage_bound(&pts, &c, 0.5, 0.1) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn slippage_bound_monotone() {
        let c = Vec3::zeros();
        let pts = vec![Vec3::new(2.0, 1.0, 0.0), Vec3::new(-1.0, 0.5, 0.2)];
        let base = slippage_bound(&pts, &c, 0.5, 0.1);
        assert!(slippage_bound(&pts, &c, 0.6, 0.1) >= base);
        assert!(slippage_bound(&pts, &c, 0.5, 0.2) >= base);
        let grown: Vec<Vec3> = pts.iter().map(|p| p * 2.0).collect();
        assert!(slippage_bound(&grown, &c, 0.5, 0.1) >= base);
    }

    #[test]
    fn source_set_without_clusters_is_statics() {
        let scan = test_scan(10);
        let statics: Vec<usize> = (0..10).collect();
        let src = build_source_set(&scan, &statics, &[], &[], 0.1, &PredictionParams::default());
        assert_eq!(src.len(), 10);
        for (i, &idx) in statics.iter().enumerate() {
            assert_eq!(src.points[i], scan.points[idx].position);
            assert_eq!(src.origin[i], PointOrigin::Static);
        }
    }

    #[test]
    fn source_set_cardinality_and_tags() {
        let scan = test_scan(1050);
        let statics: Vec<usize> = (0..1000).collect();
        let cluster = test_cluster((1000..1050).collect(), &scan, Vec3::new(4.0, 0.0, 0.0));
        let src = build_source_set(
            &scan,
            &statics,
            &[],
            &[cluster],
            0.1,
            &PredictionParams::default(),
        );
        assert_eq!(src.len(), 1050);
        let tagged = src
            .origin
            .iter()
            .filter(|o| **o == PointOrigin::Cluster(0))
            .count();
        assert_eq!(tagged, 50);
        assert_eq!(src.origin.iter().filter(|o| **o == PointOrigin::Static).count(), 1000);
    }

    #[test]
    fn noise_points_follow_the_flag() {
        let scan = test_scan(20);
        let statics: Vec<usize> = (0..10).collect();
        let noise: Vec<usize> = (10..20).collect();
        let keep = build_source_set(&scan, &statics, &noise, &[], 0.1, &PredictionParams::default());
        assert_eq!(keep.len(), 20);
        let drop = build_source_set(
            &scan,
            &statics,
            &noise,
            &[],
            0.1,
            &PredictionParams {
                include_noise_as_static: false,
                ..Default::default()
            },
        );
        assert_eq!(drop.len(), 10);
    }

    #[test]
    fn zero_dt_is_bitwise_original() {
        let scan = test_scan(30);
        let statics: Vec<usize> = (0..20).collect();
        let cluster = test_cluster((20..30).collect(), &scan, Vec3::new(7.0, -2.0, 1.0));
        let src = build_source_set(
            &scan,
            &statics,
            &[],
            &[cluster],
            0.0,
            &PredictionParams::default(),
        );
        for (i, p) in src.points.iter().enumerate() {
            let orig = match src.origin[i] {
                PointOrigin::Static => scan.points[statics[i]].position,
                PointOrigin::Cluster(_) => scan.points[20 + (i - 20)].position,
            };
            assert_eq!(*p, orig);
        }
    }

    #[test]
    fn prediction_commutes_with_translation() {
        let pts = vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.0, 5.0, 6.0)];
        let v = Vec3::new(3.0, -1.0, 0.5);
        let shift = Vec3::new(10.0, 20.0, 30.0);
        let dt = 0.25;
        let a: Vec<Vec3> = predict_points(&pts, &v, dt).iter().map(|p| p + shift).collect();
        let shifted: Vec<Vec3> = pts.iter().map(|p| p + shift).collect();
        let b = predict_points(&shifted, &v, dt);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-12);
        }
    }
}
