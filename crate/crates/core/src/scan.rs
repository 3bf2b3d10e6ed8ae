//! Doppler point-cloud data model and per-scan preprocessing: line-of-sight
//! construction, voxel downsampling, and target normal estimation.

use crate::geometry::Vec3;
use crate::kdtree::KdTree;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ScanError {
    #[error("point at range {range:.3} m is outside [{min:.3}, {max:.3}] m")]
    DegeneratePoint { range: f64, min: f64, max: f64 },
}

/// One FMCW return: position (m, sensor frame), unit line-of-sight vector,
/// and radial Doppler velocity (m/s, positive away from the sensor).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopplerPoint {
    pub position: Vec3,
    pub los: Vec3,
    pub doppler: f64,
}

/// A timestamped scan. Points keep their acquisition order.
#[derive(Debug, Clone, PartialEq)]
pub struct DopplerScan {
    pub timestamp: f64,
    pub points: Vec<DopplerPoint>,
}

impl DopplerScan {
    pub fn new(timestamp: f64, points: Vec<DopplerPoint>) -> Self {
        DopplerScan { timestamp, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.points.iter().map(|p| p.position).collect()
    }
}

/// Per-point unit surface normals for a target scan, with a validity mask
/// for points whose neighborhood was too sparse to fit a plane.
#[derive(Debug, Clone)]
pub struct NormalCloud {
    normals: Vec<Vec3>,
    valid: Vec<bool>,
}

impl NormalCloud {
    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Vec3> {
        if self.valid[i] {
            Some(&self.normals[i])
        } else {
            None
        }
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.valid[i]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Preprocessing parameters. Defaults: 0.5 m voxels, ranges clipped to
/// [0.5, 200] m, normals from 20 neighbors within 2 m.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ScanParams {
    pub voxel_size: f64,
    pub range_min: f64,
    pub range_max: f64,
    pub normal_k: usize,
    pub normal_radius: f64,
}

impl Default for ScanParams {
    fn default() -> Self {
        ScanParams {
            voxel_size: 0.5,
            range_min: 0.5,
            range_max: 200.0,
            normal_k: 20,
            normal_radius: 2.0,
        }
    }
}

impl ScanParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.voxel_size > 0.0) {
            return Err("scan.voxel_size must be > 0".into());
        }
        if !(self.range_min > 0.0 && self.range_max > self.range_min) {
            return Err("scan ranges must satisfy 0 < range_min < range_max".into());
        }
        if self.normal_k < 3 {
            return Err("scan.normal_k must be >= 3".into());
        }
        if !(self.normal_radius > 0.0) {
            return Err("scan.normal_radius must be > 0".into());
        }
        Ok(())
    }
}

/// Unit line-of-sight vector p / |p|. Points closer than `range_min` are
/// degenerate and rejected at ingestion.
pub fn los_from_position(p: &Vec3, range_min: f64) -> Result<Vec3, ScanError> {
    let range = p.norm();
    if range <= range_min {
        return Err(ScanError::DegeneratePoint {
            range,
            min: range_min,
            max: f64::INFINITY,
        });
    }
    Ok(p / range)
}

fn voxel_key(p: &Vec3, inv_voxel: f64) -> (i64, i64, i64) {
    (
        (p.x * inv_voxel).floor() as i64,
        (p.y * inv_voxel).floor() as i64,
        (p.z * inv_voxel).floor() as i64,
    )
}

/// Keeps at most one point per voxel: the measured point closest to the
/// voxel's point centroid. LOS and Doppler are carried unchanged; averaging
/// them would mix measurements from incompatible rays.
pub fn voxel_downsample(scan: &DopplerScan, voxel: f64) -> DopplerScan {
    assert!(voxel > 0.0, "voxel size must be positive");
    let inv = 1.0 / voxel;
    let mut cells: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in scan.points.iter().enumerate() {
        cells.entry(voxel_key(&p.position, inv)).or_default().push(i);
    }
    let mut keep: Vec<usize> = Vec::with_capacity(cells.len());
    for members in cells.values() {
        let n = members.len() as f64;
        let centroid = members
            .iter()
            .fold(Vec3::zeros(), |acc, &i| acc + scan.points[i].position)
            / n;
        let mut best = members[0];
        let mut best_d2 = f64::INFINITY;
        for &i in members {
            let d2 = (scan.points[i].position - centroid).norm_squared();
            if d2 < best_d2 || (d2 == best_d2 && i < best) {
                best = i;
                best_d2 = d2;
            }
        }
        keep.push(best);
    }
    keep.sort_unstable();
    DopplerScan {
        timestamp: scan.timestamp,
        points: keep.iter().map(|&i| scan.points[i]).collect(),
    }
}

/// Normal estimation by local plane fitting: for each point with at least
/// `k` neighbors within `radius`, the normal is the eigenvector of the
/// smallest eigenvalue of the neighborhood covariance, oriented toward the
/// sensor (n . (-p) >= 0). Sparse neighborhoods are masked invalid.
pub fn estimate_normals(scan: &DopplerScan, k: usize, radius: f64) -> NormalCloud {
    assert!(k >= 3, "plane fitting needs k >= 3");
    let positions = scan.positions();
    let tree = KdTree::build(&positions);
    let results: Vec<(Vec3, bool)> = positions
        .par_iter()
        .map(|p| {
            // self shows up at distance 0; ask for one extra and drop it
            let nbrs = tree.k_nearest_within(p, k + 1, radius);
            let others = nbrs.iter().filter(|(_, d2)| *d2 > 0.0).count();
            if others < k {
                return (Vec3::zeros(), false);
            }
            let n = nbrs.len() as f64;
            let mean = nbrs
                .iter()
                .fold(Vec3::zeros(), |acc, &(i, _)| acc + positions[i])
                / n;
            let mut cov = nalgebra::Matrix3::<f64>::zeros();
            for &(i, _) in &nbrs {
                let d = positions[i] - mean;
                cov += d * d.transpose();
            }
            let eig = nalgebra::SymmetricEigen::new(cov);
            let mut min_idx = 0;
            for a in 1..3 {
                if eig.eigenvalues[a] < eig.eigenvalues[min_idx] {
                    min_idx = a;
                }
            }
            let mut normal: Vec3 = eig.eigenvectors.column(min_idx).into();
            let norm = normal.norm();
            if !(norm > 0.0) || !normal.iter().all(|x| x.is_finite()) {
                return (Vec3::zeros(), false);
            }
            normal /= norm;
            if normal.dot(&(-p)) < 0.0 {
                normal = -normal;
            }
            (normal, true)
        })
        .collect();
    let (normals, valid) = results.into_iter().unzip();
    NormalCloud { normals, valid }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    fn point(x: f64, y: f64, z: f64, doppler: f64) -> DopplerPoint {
        let position = Vec3::new(x, y, z);
        DopplerPoint {
            position,
            los: position / position.norm(),
            doppler,
        }
    }

    #[test]
    fn los_basic() {
        assert_relative_eq!(
            los_from_position(&Vec3::new(3.0, 0.0, 0.0), 0.5).unwrap(),
            Vec3::new(1.0, 0.0, 0.0),
            epsilon = 1e-15
        );
        let h = (2.0f64).sqrt() / 2.0;
        assert_relative_eq!(
            los_from_position(&Vec3::new(1.0, 1.0, 0.0), 0.5).unwrap(),
            Vec3::new(h, h, 0.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn los_rejects_close_points() {
        assert!(los_from_position(&Vec3::new(0.1, 0.0, 0.0), 0.5).is_err());
    }

    #[test]
    fn los_unit_norm_and_scale_invariant() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..300 {
            let p = Vec3::new(
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
            );
            if p.norm() <= 0.6 {
                continue;
            }
            let u = los_from_position(&p, 0.5).unwrap();
            assert!((u.norm() - 1.0).abs() < 1e-12);
            let alpha = rng.random_range(1.1..3.0);
            let u2 = los_from_position(&(p * alpha), 0.5).unwrap();
            assert!((u - u2).norm() < 1e-12);
        }
    }

    #[test]
    fn downsample_empty() {
        let scan = DopplerScan::new(0.0, vec![]);
        assert!(voxel_downsample(&scan, 1.0).is_empty());
    }

    #[test]
    fn downsample_merges_one_voxel() {
        let scan = DopplerScan::new(
            0.0,
            vec![point(0.1, 0.0, 0.0, -1.0), point(0.2, 0.0, 0.0, -2.0)],
        );
        let ds = voxel_downsample(&scan, 1.0);
        assert_eq!(ds.len(), 1);
        // survivor keeps its measured doppler untouched
        assert!(ds.points[0].doppler == -1.0 || ds.points[0].doppler == -2.0);
    }

    #[test]
    fn downsample_grid_keeps_all() {
        let mut pts = Vec::new();
        for x in 0..10 {
            for y in 0..10 {
                for z in 0..10 {
                    pts.push(point(x as f64 + 2.0, y as f64 + 2.0, z as f64 + 2.0, 0.0));
                }
            }
        }
        let ds = voxel_downsample(&DopplerScan::new(0.0, pts), 1.0);
        assert_eq!(ds.len(), 1000);
    }

    #[test]
    fn downsample_idempotent() {
        let mut rng = StdRng::seed_from_u64(5);
        let pts: Vec<DopplerPoint> = (0..500)
            .map(|_| {
                point(
                    rng.random_range(2.0..20.0),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-5.0..5.0),
                )
            })
            .collect();
        let once = voxel_downsample(&DopplerScan::new(0.0, pts), 0.7);
        let twice = voxel_downsample(&once, 0.7);
        assert_eq!(once, twice);
    }

    #[test]
    fn normals_on_exact_plane() {
        let mut pts = Vec::new();
        for x in -10..=10 {
            for y in -10..=10 {
                pts.push(point(x as f64 * 0.3, y as f64 * 0.3 + 8.0, 5.0, 0.0));
            }
        }
        let scan = DopplerScan::new(0.0, pts);
        let normals = estimate_normals(&scan, 8, 2.0);
        for i in 0..scan.len() {
            let n = normals.get(i).expect("dense plane point must be valid");
            assert!((n - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-6, "normal {n:?}");
        }
    }

    #[test]
    fn normals_sparse_neighborhood_masked() {
        let scan = DopplerScan::new(
            0.0,
            vec![
                point(5.0, 0.0, 0.0, 0.0),
                point(5.1, 0.0, 0.0, 0.0),
                point(5.0, 0.2, 0.0, 0.0),
            ],
        );
        let normals = estimate_normals(&scan, 5, 2.0);
        for i in 0..3 {
            assert!(normals.get(i).is_none());
        }
    }

    #[test]
    fn normals_on_noisy_plane_within_two_degrees() {
        let mut rng = StdRng::seed_from_u64(9);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let mut pts = Vec::new();
        for x in -15..=15 {
            for y in -15..=15 {
                pts.push(point(
                    x as f64 * 0.25,
                    y as f64 * 0.25 + 6.0,
                    5.0 + noise.sample(&mut rng),
                    0.0,
                ));
            }
        }
        let scan = DopplerScan::new(0.0, pts);
        let normals = estimate_normals(&scan, 20, 2.0);
        let mut checked = 0;
        for i in 0..scan.len() {
            if let Some(n) = normals.get(i) {
                let cosang = n.dot(&Vec3::new(0.0, 0.0, -1.0)).abs().min(1.0);
                let ang_deg = cosang.acos().to_degrees();
                assert!(ang_deg < 2.0, "normal off by {ang_deg:.3} deg");
                checked += 1;
            }
        }
        assert!(checked > scan.len() / 2);
    }

    #[test]
    fn normals_are_unit_vectors() {
        let mut rng = StdRng::seed_from_u64(21);
        let pts: Vec<DopplerPoint> = (0..400)
            .map(|_| {
                point(
                    rng.random_range(3.0..15.0),
                    rng.random_range(-8.0..8.0),
                    rng.random_range(-2.0..2.0),
                    0.0,
                )
            })
            .collect();
        let scan = DopplerScan::new(0.0, pts);
        let normals = estimate_normals(&scan, 10, 2.0);
        for i in 0..scan.len() {
            if let Some(n) = normals.get(i) {
                assert!((n.norm() - 1.0).abs() < 1e-6);
            }
        }
    }
}
