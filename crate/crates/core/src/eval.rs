//! Relative pose error at the frame gap (translation and rotation parts),
//! summary aggregates, and convergence statistics.

use crate::geometry::Pose;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum EvalError {
    #[error("trajectory timestamps must be strictly increasing")]
    NonMonotonicTimestamps,
    #[error("fewer than 2 matched timestamps between the trajectories")]
    InsufficientOverlap,
}

/// A timestamped pose sequence with strictly increasing timestamps.
#[derive(Debug, Clone)]
pub struct Trajectory {
    entries: Vec<(f64, Pose)>,
}

impl Trajectory {
    pub fn new(entries: Vec<(f64, Pose)>) -> Result<Self, EvalError> {
        for w in entries.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(EvalError::NonMonotonicTimestamps);
            }
        }
        Ok(Trajectory { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(f64, Pose)] {
        &self.entries
    }

    pub fn push(&mut self, timestamp: f64, pose: Pose) -> Result<(), EvalError> {
        if let Some(last) = self.entries.last() {
            if timestamp <= last.0 {
                return Err(EvalError::NonMonotonicTimestamps);
            }
        }
        self.entries.push((timestamp, pose));
        Ok(())
    }
}

/// Per-frame relative pose error: translation (m) and rotation (deg).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameError {
    pub timestamp: f64,
    pub rte: f64,
    pub rre_deg: f64,
}

/// Associates poses by nearest timestamp within `tol` (no interpolation),
/// then for consecutive matched pairs computes
/// E = (Q_t^-1 Q_t+1)^-1 (P_t^-1 P_t+1) with P = estimate, Q = ground
/// truth; RTE = |trans(E)|, RRE = rotation angle of E in degrees.
pub fn relative_pose_errors(
    est: &Trajectory,
    gt: &Trajectory,
    tol: f64,
) -> Result<Vec<FrameError>, EvalError> {
    let mut matched: Vec<(Pose, Pose, f64)> = Vec::new();
    let gts = gt.entries();
    for &(t, p) in est.entries() {
        // gts is sorted; nearest by binary search
        let idx = gts.partition_point(|(gt_t, _)| *gt_t < t);
        let mut best: Option<(f64, usize)> = None;
        for cand in [idx.wrapping_sub(1), idx] {
            if cand < gts.len() {
                let d = (gts[cand].0 - t).abs();
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, cand));
                }
            }
        }
        if let Some((d, j)) = best {
            if d <= tol {
                matched.push((p, gts[j].1, t));
            }
        }
    }
    if matched.len() < 2 {
        return Err(EvalError::InsufficientOverlap);
    }
    let mut errors = Vec::with_capacity(matched.len() - 1);
    for w in matched.windows(2) {
        let (p0, q0, _) = w[0];
        let (p1, q1, t1) = w[1];
        let est_rel = p0.inverse().compose(&p1);
        let gt_rel = q0.inverse().compose(&q1);
        let e = gt_rel.inverse().compose(&est_rel);
        errors.push(FrameError {
            timestamp: t1,
            rte: e.translation.norm(),
            rre_deg: e.rotation.angle().to_degrees(),
        });
    }
    Ok(errors)
}

/// Aggregates a per-frame error series plus solver statistics the way the
/// benchmark tables report them.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub frames: Vec<FrameError>,
    pub mean_rte: f64,
    pub median_rte: f64,
    pub rmse_rte: f64,
    pub mean_rre_deg: f64,
    pub median_rre_deg: f64,
    pub rmse_rre_deg: f64,
    /// Fraction of frames whose registration converged.
    pub convergence_rate: f64,
    pub mean_iterations: f64,
    /// Pipeline throughput in frames per second, when timing was recorded.
    pub fps: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn rmse(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Summary statistics for one run. `iterations`/`converged`/`seconds` come
/// from the per-frame solver stats; pass empty slices when unavailable.
pub fn summarize(
    frames: Vec<FrameError>,
    iterations: &[usize],
    converged: &[bool],
    total_seconds: f64,
) -> EvalReport {
    assert!(!frames.is_empty(), "summarize needs at least one frame");
    let rte: Vec<f64> = frames.iter().map(|f| f.rte).collect();
    let rre: Vec<f64> = frames.iter().map(|f| f.rre_deg).collect();
    let convergence_rate = if converged.is_empty() {
        1.0
    } else {
        converged.iter().filter(|c| **c).count() as f64 / converged.len() as f64
    };
    let mean_iterations = if iterations.is_empty() {
        0.0
    } else {
        iterations.iter().sum::<usize>() as f64 / iterations.len() as f64
    };
    let fps = if total_seconds > 0.0 {
        converged.len().max(frames.len()) as f64 / total_seconds
    } else {
        0.0
    };
    EvalReport {
        mean_rte: mean(&rte),
        median_rte: median(&rte),
        rmse_rte: rmse(&rte),
        mean_rre_deg: mean(&rre),
        median_rre_deg: median(&rre),
        rmse_rre_deg: rmse(&rre),
        convergence_rate,
        mean_iterations,
        fps,
        frames,
    }
}
