//! Frame-to-frame odometry: ego motion, velocity filtering, clustering,
//! velocity reconstruction, prediction, and Doppler-aware registration, with
//! warm-start state threaded between frames and ablation toggles for each
//! stage.
//!
//! Frame convention: scan t is the source, scan t+1 the target, and the
//! estimated transform maps source coordinates onto the target frame. The
//! world pose therefore composes as W_{t+1} = W_t * T^-1.

use crate::cluster::{cluster_dynamic, ClusterParams};
use crate::ego::{estimate_ego_motion, VelocityFilterParams};
use crate::eval::Trajectory;
use crate::geometry::{exp_se3, log_se3, Pose, Twist};
use crate::object_velocity::{reconstruct_cluster, DynamicCluster, VelocityParams};
use crate::predict::{build_source_set, PredictionParams};
use crate::register::{register, RegistrationParams};
use crate::scan::{estimate_normals, voxel_downsample, DopplerScan, NormalCloud, ScanParams};
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum PipelineError {
    #[error("odometry needs at least 2 scans, got {0}")]
    TooFewScans(usize),
    #[error("scan timestamps must strictly increase ({prev} then {curr})")]
    NonMonotonicTimestamps { prev: f64, curr: f64 },
}

/// Every tunable of the pipeline, grouped per stage, plus the ablation
/// flags. Disabling the velocity filter forces dynamic-point prediction off
/// as well: without the filter there is no dynamic set to predict.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub scan: ScanParams,
    pub ego: VelocityFilterParams,
    pub cluster: ClusterParams,
    pub velocity: VelocityParams,
    pub prediction: PredictionParams,
    pub registration: RegistrationParams,
    pub pipeline: StageToggles,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct StageToggles {
    pub enable_vf: bool,
    pub enable_dpp: bool,
    pub enable_dr: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles {
            enable_vf: true,
            enable_dpp: true,
            enable_dr: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.scan.validate()?;
        self.ego.validate()?;
        self.cluster.validate()?;
        self.velocity.validate()?;
        self.registration.validate()?;
        Ok(())
    }

    /// Effective stage switches after applying the coupling constraint.
    pub fn effective_toggles(&self) -> StageToggles {
        StageToggles {
            enable_vf: self.pipeline.enable_vf,
            enable_dpp: self.pipeline.enable_dpp && self.pipeline.enable_vf,
            enable_dr: self.pipeline.enable_dr,
        }
    }

    fn effective_registration(&self) -> RegistrationParams {
        let mut params = self.registration.clone();
        if !self.pipeline.enable_dr {
            params.lambda_v = 0.0;
        }
        params
    }
}

/// Wall-clock seconds spent in each stage of one frame.
#[derive(Debug, Clone, Copy, Default)]
pub struct StageTimings {
    pub preprocess: f64,
    pub ego: f64,
    pub cluster: f64,
    pub predict: f64,
    pub register: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.preprocess + self.ego + self.cluster + self.predict + self.register
    }
}

/// Per-frame diagnostics emitted by the pipeline.
#[derive(Debug, Clone)]
pub struct FrameStats {
    pub timestamp: f64,
    pub dt: f64,
    /// Pose used to initialize registration (constant-velocity warm start).
    pub init_pose: Pose,
    /// Estimated relative pose mapping source coordinates to the target.
    pub relative_pose: Pose,
    pub iterations: usize,
    pub converged: bool,
    pub correspondences: usize,
    pub source_points: usize,
    pub target_points: usize,
    pub dynamic_points: usize,
    pub clusters_found: usize,
    pub clusters_retained: usize,
    pub ego_design_rank: usize,
    pub rms_geometry: f64,
    pub rms_doppler: f64,
    pub timings: StageTimings,
}

/// Serial odometry state: previous warp twist for the warm start and the
/// accumulated world trajectory.
#[derive(Debug, Clone)]
pub struct OdometryState {
    pub world_pose: Pose,
    /// log(T_prev)/dt_prev: the scan-warp twist, negated sensor twist.
    pub prev_twist: Twist,
    pub trajectory: Trajectory,
}

impl OdometryState {
    pub fn new(start_timestamp: f64) -> Self {
        OdometryState {
            world_pose: Pose::identity(),
            prev_twist: Twist::zero(),
            trajectory: Trajectory::new(vec![(start_timestamp, Pose::identity())])
                .expect("single pose"),
        }
    }
}

/// A downsampled scan with (optionally) its target normals.
#[derive(Debug, Clone)]
pub struct PreparedScan {
    pub scan: DopplerScan,
    pub normals: Option<NormalCloud>,
}

pub fn prepare_scan(scan: &DopplerScan, params: &ScanParams, with_normals: bool) -> PreparedScan {
    let ds = voxel_downsample(scan, params.voxel_size);
    let normals = with_normals.then(|| estimate_normals(&ds, params.normal_k, params.normal_radius));
    PreparedScan { scan: ds, normals }
}

/// Runs the enabled stages on one frame pair and advances the odometry
/// state. Registration failures fall back to the constant-velocity pose and
/// mark the frame as not converged; odometry always emits a pose.
pub fn process_frame_pair(
    prev: &DopplerScan,
    curr: &DopplerScan,
    state: &mut OdometryState,
    config: &PipelineConfig,
) -> Result<(Pose, FrameStats), PipelineError> {
    if curr.timestamp <= prev.timestamp {
        return Err(PipelineError::NonMonotonicTimestamps {
            prev: prev.timestamp,
            curr: curr.timestamp,
        });
    }
    let t0 = Instant::now();
    let source_prep = prepare_scan(prev, &config.scan, false);
    let target_prep = prepare_scan(curr, &config.scan, true);
    let preprocess = t0.elapsed().as_secs_f64();
    let (pose, mut stats) = process_prepared(&source_prep, &target_prep, state, config)?;
    stats.timings.preprocess = preprocess;
    Ok((pose, stats))
}

/// Same as [`process_frame_pair`] but on scans already downsampled, with
/// target normals precomputed. `run_odometry` uses this to prepare each
/// scan exactly once.
pub fn process_prepared(
    source_prep: &PreparedScan,
    target_prep: &PreparedScan,
    state: &mut OdometryState,
    config: &PipelineConfig,
) -> Result<(Pose, FrameStats), PipelineError> {
    let source = &source_prep.scan;
    let target = &target_prep.scan;
    if target.timestamp <= source.timestamp {
        return Err(PipelineError::NonMonotonicTimestamps {
            prev: source.timestamp,
            curr: target.timestamp,
        });
    }
    let dt = target.timestamp - source.timestamp;
    let toggles = config.effective_toggles();
    let mut timings = StageTimings::default();

    // ego motion on the source scan; the regression prior is the sensor
    // twist, the negative of the stored scan-warp twist
    let t0 = Instant::now();
    let sensor_prior = -state.prev_twist;
    let ego = estimate_ego_motion(source, &sensor_prior, &config.ego);
    timings.ego = t0.elapsed().as_secs_f64();

    let all_indices: Vec<usize> = (0..source.len()).collect();
    let (static_indices, dynamic_indices, ego_rank) = match (&ego, toggles.enable_vf) {
        (Ok(est), true) => (
            est.static_indices.clone(),
            est.dynamic_indices.clone(),
            est.design_rank,
        ),
        (Ok(est), false) => (all_indices.clone(), Vec::new(), est.design_rank),
        // degenerate geometry: fall back to the prior twist, all static
        (Err(_), _) => (all_indices.clone(), Vec::new(), 0),
    };

    let t0 = Instant::now();
    let mut clusters: Vec<DynamicCluster> = Vec::new();
    let mut noise: Vec<usize> = Vec::new();
    let mut clusters_found = 0;
    if toggles.enable_dpp && !dynamic_indices.is_empty() {
        if let Ok(est) = &ego {
            let candidate_positions: Vec<_> = dynamic_indices
                .iter()
                .map(|&i| source.points[i].position)
                .collect();
            let mut labeling = cluster_dynamic(&candidate_positions, &config.cluster);
            if labeling.n_clusters == 0 && candidate_positions.len() >= config.cluster.min_cluster_size
            {
                // Excess-of-mass extraction never selects the dendrogram
                // root, so a scene with exactly one moving object comes back
                // all-noise. Retrying with the root admitted is safe here:
                // an incoherent root cluster fails the velocity-consistency
                // gate and is discarded again.
                let retry = ClusterParams {
                    allow_single_cluster: true,
                    ..config.cluster.clone()
                };
                labeling = cluster_dynamic(&candidate_positions, &retry);
            }
            clusters_found = labeling.n_clusters;
            for label in 0..labeling.n_clusters as i32 {
                let members: Vec<usize> = labeling
                    .members(label)
                    .into_iter()
                    .map(|local| dynamic_indices[local])
                    .collect();
                if let Some(cluster) =
                    reconstruct_cluster(source, &members, est, &config.velocity, &mut noise)
                {
                    clusters.push(cluster);
                }
            }
            // points HDBSCAN itself marked as noise
            for (local, &label) in labeling.labels.iter().enumerate() {
                if label == crate::cluster::NOISE {
                    noise.push(dynamic_indices[local]);
                }
            }
        }
    }
    timings.cluster = t0.elapsed().as_secs_f64();

    // with prediction disabled, detected dynamic points are discarded
    let t0 = Instant::now();
    let source_set = build_source_set(
        source,
        &static_indices,
        &noise,
        &clusters,
        dt,
        &config.prediction,
    );
    timings.predict = t0.elapsed().as_secs_f64();

    // Initial pose from the current frame's Doppler ego estimate: the warp
    // twist is the negated sensor twist. Rotation rides on the warm start
    // (omega is unobservable from radial Doppler and stays at the prior);
    // translation comes from the measurement, which keeps the init valid
    // even from a cold start in translation-degenerate scenes. Falls back
    // to the previous registration twist when ego estimation failed.
    let init_twist = match &ego {
        Ok(est) => -est.twist(),
        Err(_) => state.prev_twist,
    };
    let init = exp_se3(&init_twist, dt).unwrap_or_else(|_| Pose::identity());
    let reg_params = config.effective_registration();
    let normals = target_prep
        .normals
        .as_ref()
        .expect("target scan must carry normals");

    let t0 = Instant::now();
    let reg = register(&source_set, target, normals, &init, &reg_params);
    timings.register = t0.elapsed().as_secs_f64();

    let (pose, iterations, converged, correspondences, rms_g, rms_v) = match reg {
        Ok(r) => (
            r.pose,
            r.iterations,
            r.converged,
            r.correspondence_count,
            r.rms_geometry,
            r.rms_doppler,
        ),
        Err(_) => (init, 0, false, 0, f64::NAN, f64::NAN),
    };

    // advance the warm start and the world pose
    if let Ok(twist) = log_se3(&pose) {
        state.prev_twist = twist.scaled(1.0 / dt);
    }
    state.world_pose = state.world_pose.compose_renormalized(&pose.inverse());
    state
        .trajectory
        .push(target.timestamp, state.world_pose)
        .expect("monotonic timestamps checked above");

    let stats = FrameStats {
        timestamp: target.timestamp,
        dt,
        init_pose: init,
        relative_pose: pose,
        iterations,
        converged,
        correspondences,
        source_points: source.len(),
        target_points: target.len(),
        dynamic_points: dynamic_indices.len(),
        clusters_found,
        clusters_retained: clusters.len(),
        ego_design_rank: ego_rank,
        rms_geometry: rms_g,
        rms_doppler: rms_v,
        timings,
    };
    Ok((pose, stats))
}

/// Sequential odometry over a scan sequence: N scans produce N absolute
/// poses (the first is the identity) and N-1 relative estimates.
pub fn run_odometry(
    scans: &[DopplerScan],
    config: &PipelineConfig,
) -> Result<(Trajectory, Vec<FrameStats>), PipelineError> {
    if scans.len() < 2 {
        return Err(PipelineError::TooFewScans(scans.len()));
    }
    let mut state = OdometryState::new(scans[0].timestamp);
    let mut stats = Vec::with_capacity(scans.len() - 1);
    let mut prev_prep: Option<PreparedScan> = None;
    for pair in scans.windows(2) {
        let t0 = Instant::now();
        let source_prep = match prev_prep.take() {
            Some(p) => p,
            None => prepare_scan(&pair[0], &config.scan, false),
        };
        let mut target_prep = prepare_scan(&pair[1], &config.scan, true);
        let preprocess = t0.elapsed().as_secs_f64();
        let (_, mut frame_stats) = process_prepared(&source_prep, &target_prep, &mut state, config)?;
        frame_stats.timings.preprocess = preprocess;
        stats.push(frame_stats);
        // the target becomes the next source; its normals are not needed
        target_prep.normals = None;
        prev_prep = Some(target_prep);
    }
    Ok((state.trajectory, stats))
}
