//! Synthetic FMCW scan generator with exact Doppler physics: the
//! ground-truth oracle behind the test suites.
//!
//! Scenes are rectangles (walls, road strips, box faces) plus rigid moving
//! boxes with constant translational velocity and optional spin. Points are
//! sampled uniformly by area; each sample defines a ray from the sensor and
//! the nearest surface hit along that ray wins. For a hit point with world
//! velocity w and sensor body twist (v, omega), the measured Doppler is
//!
//! ```text
//! s = u . (R^T w) - u . (v + omega x p)
//! ```
//!
//! positive away from the sensor, so static points (w = 0) reproduce the
//! ego-motion model exactly.

use crate::eval::Trajectory;
use crate::geometry::{exp_se3, Pose, Rot3, Twist, Vec3};
use crate::scan::{DopplerPoint, DopplerScan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SynthError {
    #[error("scene has no visible surface area")]
    EmptyScene,
    #[error("frame {frame} produced no valid points")]
    EmptyFrame { frame: usize },
    #[error("unknown scene preset '{name}'; available: {available}")]
    UnknownPreset { name: String, available: String },
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
}

/// A finite rectangle: corner plus two edge vectors.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Rect {
    pub corner: Vec3,
    pub edge_u: Vec3,
    pub edge_v: Vec3,
}

impl Rect {
    pub fn area(&self) -> f64 {
        self.edge_u.cross(&self.edge_v).norm()
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec3 {
        self.corner
            + self.edge_u * rng.random_range(0.0..1.0)
            + self.edge_v * rng.random_range(0.0..1.0)
    }

    /// Ray-rectangle intersection; returns the ray parameter t > 0.
    fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let n = self.edge_u.cross(&self.edge_v);
        let denom = dir.dot(&n);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = (self.corner - origin).dot(&n) / denom;
        if t <= 1e-9 {
            return None;
        }
        let d = origin + dir * t - self.corner;
        let uu = self.edge_u.norm_squared();
        let vv = self.edge_v.norm_squared();
        let uv = self.edge_u.dot(&self.edge_v);
        let du = d.dot(&self.edge_u);
        let dv = d.dot(&self.edge_v);
        let det = uu * vv - uv * uv;
        if det.abs() < 1e-12 {
            return None;
        }
        let alpha = (du * vv - dv * uv) / det;
        let beta = (dv * uu - du * uv) / det;
        let eps = 1e-9;
        if (-eps..=1.0 + eps).contains(&alpha) && (-eps..=1.0 + eps).contains(&beta) {
            Some(t)
        } else {
            None
        }
    }
}

/// Six faces of an axis-aligned box under the given rotation.
pub fn box_faces(center: &Vec3, half: &Vec3, rotation: &Rot3) -> Vec<Rect> {
    let h = *half;
    let axes = [Vec3::x(), Vec3::y(), Vec3::z()];
    let mut faces = Vec::with_capacity(6);
    for a in 0..3 {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        for sign in [-1.0, 1.0] {
            let corner_local = axes[a] * (sign * h[a]) - axes[b] * h[b] - axes[c] * h[c];
            faces.push(Rect {
                corner: center + *rotation * corner_local,
                edge_u: *rotation * (axes[b] * (2.0 * h[b])),
                edge_v: *rotation * (axes[c] * (2.0 * h[c])),
            });
        }
    }
    faces
}

/// A rigid moving box: constant world-frame translational velocity and an
/// optional spin about its centroid. The spin exists to exercise the
/// rotational slippage bound; the estimator never recovers it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MovingObject {
    pub half_extents: Vec3,
    pub initial_center: Vec3,
    pub velocity: Vec3,
    #[serde(default = "Vec3::zeros")]
    pub angular_velocity: Vec3,
}

impl MovingObject {
    fn center_at(&self, t: f64) -> Vec3 {
        self.initial_center + self.velocity * t
    }

    fn rotation_at(&self, t: f64) -> Rot3 {
        let n = self.angular_velocity.norm();
        if n == 0.0 {
            Rot3::identity()
        } else {
            Rot3::from_axis_angle(&self.angular_velocity, n * t)
        }
    }

    /// World velocity of a surface point x at time t.
    fn point_velocity(&self, x: &Vec3, t: f64) -> Vec3 {
        self.velocity + self.angular_velocity.cross(&(x - self.center_at(t)))
    }
}

/// One leg of the ego trajectory: hold this twist for `duration` seconds.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrajectorySegment {
    pub duration: f64,
    pub omega: Vec3,
    pub v: Vec3,
}

impl TrajectorySegment {
    pub fn twist(&self) -> Twist {
        Twist::new(self.omega, self.v)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub sigma_doppler: f64,
    pub sigma_range: f64,
}

/// Full scene description. Loadable from a TOML spec file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub name: String,
    #[serde(default)]
    pub static_surfaces: Vec<Rect>,
    #[serde(default)]
    pub objects: Vec<MovingObject>,
    pub trajectory: Vec<TrajectorySegment>,
    pub scan_rate: f64,
    pub points_per_scan: usize,
    pub n_frames: usize,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub seed: u64,
    #[serde(default = "default_range_min")]
    pub range_min: f64,
    #[serde(default = "default_range_max")]
    pub range_max: f64,
}

fn default_range_min() -> f64 {
    0.5
}

fn default_range_max() -> f64 {
    200.0
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.scan_rate > 0.0) {
            return Err(SynthError::InvalidSpec("scan_rate must be > 0".into()));
        }
        if self.n_frames < 1 || self.points_per_scan == 0 {
            return Err(SynthError::InvalidSpec(
                "need at least one frame and one point per scan".into(),
            ));
        }
        if self.trajectory.is_empty() {
            return Err(SynthError::InvalidSpec("trajectory is empty".into()));
        }
        if self.static_surfaces.is_empty() && self.objects.is_empty() {
            return Err(SynthError::EmptyScene);
        }
        Ok(())
    }

    /// Sensor pose in the world at time t, integrating the piecewise
    /// constant twist segments (the last segment extends indefinitely).
    pub fn ego_pose_at(&self, t: f64) -> Pose {
        let mut pose = Pose::identity();
        let mut remaining = t;
        for (i, seg) in self.trajectory.iter().enumerate() {
            let last = i + 1 == self.trajectory.len();
            let dt = if last {
                remaining
            } else {
                remaining.min(seg.duration)
            };
            if dt > 0.0 {
                pose = pose.compose(&exp_se3(&seg.twist(), dt).expect("finite twist"));
            }
            remaining -= dt;
            if remaining <= 0.0 {
                break;
            }
        }
        pose
    }

    /// Active body twist at time t.
    pub fn ego_twist_at(&self, t: f64) -> Twist {
        let mut acc = 0.0;
        for (i, seg) in self.trajectory.iter().enumerate() {
            acc += seg.duration;
            if t < acc || i + 1 == self.trajectory.len() {
                return seg.twist();
            }
        }
        Twist::zero()
    }
}

/// Per-point provenance in a generated scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointLabel {
    Static,
    Object(usize),
}

/// Ground truth for one generated frame.
#[derive(Debug, Clone)]
pub struct FrameTruth {
    pub timestamp: f64,
    /// Sensor pose in the world frame (world frame = sensor frame at t=0).
    pub pose: Pose,
    /// Sensor body twist at scan time.
    pub twist: Twist,
    pub labels: Vec<PointLabel>,
    /// Each object's translational velocity expressed in this frame's
    /// sensor axes; what cluster velocity reconstruction estimates.
    pub object_velocity_sensor: Vec<Vec3>,
}

#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    pub frames: Vec<FrameTruth>,
}

impl GroundTruth {
    pub fn trajectory(&self) -> Trajectory {
        Trajectory::new(self.frames.iter().map(|f| (f.timestamp, f.pose)).collect())
            .expect("ground-truth timestamps are strictly increasing")
    }

    /// True relative pose mapping frame f coordinates to frame f+1.
    pub fn relative_pose(&self, f: usize) -> Pose {
        self.frames[f + 1]
            .pose
            .inverse()
            .compose(&self.frames[f].pose)
    }
}

struct WorldSurface {
    rect: Rect,
    owner: PointLabel,
    cumulative_area: f64,
}

/// Generates the scan sequence and its ground truth. Deterministic per
/// seed; each frame draws from its own seeded substream.
pub fn generate_sequence(spec: &SceneSpec) -> Result<(Vec<DopplerScan>, GroundTruth), SynthError> {
    spec.validate()?;
    let dt = 1.0 / spec.scan_rate;
    let mut scans = Vec::with_capacity(spec.n_frames);
    let mut truth = GroundTruth::default();
    for frame in 0..spec.n_frames {
        let t = frame as f64 * dt;
        let (scan, frame_truth) = generate_frame(spec, frame, t)?;
        scans.push(scan);
        truth.frames.push(frame_truth);
    }
    Ok((scans, truth))
}

fn generate_frame(
    spec: &SceneSpec,
    frame: usize,
    t: f64,
) -> Result<(DopplerScan, FrameTruth), SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(
        spec.seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(frame as u64 + 1),
    );
    let pose = spec.ego_pose_at(t);
    let twist = spec.ego_twist_at(t);
    let inv_pose = pose.inverse();
    let sensor_origin = pose.translation;
    let rot_t = pose.rotation.transpose();

    let mut surfaces: Vec<WorldSurface> = Vec::new();
    let mut total_area = 0.0;
    for rect in &spec.static_surfaces {
        total_area += rect.area();
        surfaces.push(WorldSurface {
            rect: rect.clone(),
            owner: PointLabel::Static,
            cumulative_area: total_area,
        });
    }
    for (k, obj) in spec.objects.iter().enumerate() {
        let center = obj.center_at(t);
        let rotation = obj.rotation_at(t);
        for face in box_faces(&center, &obj.half_extents, &rotation) {
            total_area += face.area();
            surfaces.push(WorldSurface {
                rect: face,
                owner: PointLabel::Object(k),
                cumulative_area: total_area,
            });
        }
    }
    if !(total_area > 0.0) {
        return Err(SynthError::EmptyScene);
    }

    let doppler_noise = Normal::new(0.0, spec.noise.sigma_doppler.max(0.0)).unwrap();
    let range_noise = Normal::new(0.0, spec.noise.sigma_range.max(0.0)).unwrap();
    let mut points = Vec::with_capacity(spec.points_per_scan);
    let mut labels = Vec::with_capacity(spec.points_per_scan);
    for _ in 0..spec.points_per_scan {
        // area-weighted surface choice, then a uniform sample on it
        let pick = rng.random_range(0.0..total_area);
        let idx = surfaces
            .partition_point(|s| s.cumulative_area <= pick)
            .min(surfaces.len() - 1);
        let sample = surfaces[idx].rect.sample(&mut rng);
        let dir_w = sample - sensor_origin;
        let dist = dir_w.norm();
        if dist < 1e-9 {
            continue;
        }
        let dir_w = dir_w / dist;

        // nearest hit along the ray wins
        let mut best_t = f64::INFINITY;
        let mut owner = PointLabel::Static;
        for s in &surfaces {
            if let Some(hit_t) = s.rect.intersect(&sensor_origin, &dir_w) {
                if hit_t < best_t {
                    best_t = hit_t;
                    owner = s.owner;
                }
            }
        }
        if !best_t.is_finite() {
            continue;
        }
        let hit_world = sensor_origin + dir_w * best_t;
        let mut p = inv_pose.apply(&hit_world);
        let range = p.norm();
        if range <= spec.range_min || range >= spec.range_max {
            continue;
        }

        let w_world = match owner {
            PointLabel::Static => Vec3::zeros(),
            PointLabel::Object(k) => spec.objects[k].point_velocity(&hit_world, t),
        };
        let w_sensor = rot_t * w_world;
        let u0 = p / range;
        let mut s = u0.dot(&w_sensor) - u0.dot(&(twist.v + twist.omega.cross(&p)));

        if spec.noise.sigma_range > 0.0 {
            p += u0 * range_noise.sample(&mut rng);
            if p.norm() <= spec.range_min || p.norm() >= spec.range_max {
                continue;
            }
        }
        if spec.noise.sigma_doppler > 0.0 {
            s += doppler_noise.sample(&mut rng);
        }
        let los = p / p.norm();
        points.push(DopplerPoint {
            position: p,
            los,
            doppler: s,
        });
        labels.push(owner);
    }
    if points.is_empty() {
        return Err(SynthError::EmptyFrame { frame });
    }

    let object_velocity_sensor = spec.objects.iter().map(|o| rot_t * o.velocity).collect();
    Ok((
        DopplerScan::new(t, points),
        FrameTruth {
            timestamp: t,
            pose,
            twist,
            labels,
            object_velocity_sensor,
        },
    ))
}

/// Names of the versioned scene presets.
pub fn standard_scenes() -> &'static [&'static str] {
    &["highway", "bridge", "intersection", "tunnel"]
}

/// A fixed, versioned preset by name. The seed is part of the preset; the
/// CLI may override it.
pub fn preset(name: &str) -> Result<SceneSpec, SynthError> {
    match name {
        "highway" => Ok(highway()),
        "bridge" => Ok(bridge()),
        "intersection" => Ok(intersection()),
        "tunnel" => Ok(tunnel()),
        _ => Err(SynthError::UnknownPreset {
            name: name.to_string(),
            available: standard_scenes().join(", "),
        }),
    }
}

fn strip(x0: f64, x1: f64, y0: f64, y1: f64, z: f64) -> Rect {
    Rect {
        corner: Vec3::new(x0, y0, z),
        edge_u: Vec3::new(x1 - x0, 0.0, 0.0),
        edge_v: Vec3::new(0.0, y1 - y0, 0.0),
    }
}

fn wall_x(x0: f64, x1: f64, y: f64, z0: f64, z1: f64) -> Rect {
    Rect {
        corner: Vec3::new(x0, y, z0),
        edge_u: Vec3::new(x1 - x0, 0.0, 0.0),
        edge_v: Vec3::new(0.0, 0.0, z1 - z0),
    }
}

/// Open highway at ~38 m/s among six trucks. Static geometry is two road
/// strips, translation-invariant along the direction of travel, so the
/// moving traffic and the Doppler term carry the forward and yaw
/// information. Roughly half the returns land on dynamic objects.
fn highway() -> SceneSpec {
    let truck = Vec3::new(4.0, 1.25, 1.5);
    let lane = |x: f64, y: f64, v: f64, vy: f64, spin: f64| MovingObject {
        half_extents: truck,
        initial_center: Vec3::new(x, y, -0.3),
        velocity: Vec3::new(v, vy, 0.0),
        angular_velocity: Vec3::new(0.0, 0.0, spin),
    };
    SceneSpec {
        name: "highway".into(),
        static_surfaces: vec![
            strip(-30.0, 160.0, -6.5, -3.5, -1.8),
            strip(-30.0, 160.0, 3.5, 6.5, -1.8),
        ],
        objects: vec![
            lane(18.0, -2.0, 30.0, 0.0, 0.0),
            lane(32.0, 2.0, 26.0, 0.0, 0.0),
            lane(-14.0, 2.0, 44.0, 0.0, 0.0),
            lane(10.0, 2.2, 34.0, 0.3, 0.0),
            lane(45.0, -2.2, 28.0, 0.0, 0.05),
            lane(-25.0, -2.0, 46.0, 0.0, 0.0),
        ],
        // speed and heading vary between legs so the constant-velocity warm
        // start carries a real error into every frame
        trajectory: vec![
            TrajectorySegment {
                duration: 0.25,
                omega: Vec3::zeros(),
                v: Vec3::new(38.0, 0.0, 0.0),
            },
            TrajectorySegment {
                duration: 0.25,
                omega: Vec3::new(0.0, 0.0, 0.05),
                v: Vec3::new(36.0, 0.4, 0.0),
            },
            TrajectorySegment {
                duration: 0.25,
                omega: Vec3::new(0.0, 0.0, -0.06),
                v: Vec3::new(39.5, -0.3, 0.0),
            },
            TrajectorySegment {
                duration: 0.25,
                omega: Vec3::new(0.0, 0.0, 0.04),
                v: Vec3::new(37.0, 0.2, 0.0),
            },
        ],
        scan_rate: 10.0,
        points_per_scan: 4000,
        n_frames: 8,
        noise: NoiseSpec {
            sigma_doppler: 0.1,
            sigma_range: 0.02,
        },
        seed: 7001,
        range_min: 0.5,
        range_max: 200.0,
    }
}

/// Bridge deck with railing posts every five meters and two oncoming
/// vehicles. The posts repeat, so geometric matches alias easily.
fn bridge() -> SceneSpec {
    let mut surfaces = vec![strip(-20.0, 100.0, -5.0, 5.0, -1.6)];
    let mut x = -20.0;
    while x <= 100.0 {
        for y in [-5.2, 5.2] {
            surfaces.extend(box_faces(
                &Vec3::new(x, y, -0.6),
                &Vec3::new(0.15, 0.15, 1.0),
                &Rot3::identity(),
            ));
        }
        x += 5.0;
    }
    SceneSpec {
        name: "bridge".into(),
        static_surfaces: surfaces,
        objects: vec![
            MovingObject {
                half_extents: Vec3::new(2.2, 1.0, 0.8),
                initial_center: Vec3::new(25.0, -2.5, -0.8),
                velocity: Vec3::new(-12.0, 0.0, 0.0),
                angular_velocity: Vec3::zeros(),
            },
            MovingObject {
                half_extents: Vec3::new(2.2, 1.0, 0.8),
                initial_center: Vec3::new(12.0, 2.5, -0.8),
                velocity: Vec3::new(11.0, 0.0, 0.0),
                angular_velocity: Vec3::zeros(),
            },
        ],
        trajectory: vec![
            TrajectorySegment {
                duration: 0.4,
                omega: Vec3::zeros(),
                v: Vec3::new(15.0, 0.0, 0.0),
            },
            TrajectorySegment {
                duration: 0.4,
                omega: Vec3::new(0.0, 0.0, 0.03),
                v: Vec3::new(14.0, 0.2, 0.0),
            },
        ],
        scan_rate: 10.0,
        points_per_scan: 4000,
        n_frames: 8,
        noise: NoiseSpec {
            sigma_doppler: 0.1,
            sigma_range: 0.02,
        },
        seed: 7002,
        range_min: 0.5,
        range_max: 200.0,
    }
}

/// Slow ego through a cluttered crossing: eight movers on transverse and
/// diagonal tracks, walled by four building faces.
fn intersection() -> SceneSpec {
    let mut objects = Vec::new();
    let courses: [(Vec3, Vec3); 8] = [
        (Vec3::new(18.0, -20.0, -0.6), Vec3::new(0.0, 9.0, 0.0)),
        (Vec3::new(24.0, 22.0, -0.6), Vec3::new(0.0, -11.0, 0.0)),
        (Vec3::new(30.0, -15.0, -0.6), Vec3::new(-4.0, 7.0, 0.0)),
        (Vec3::new(12.0, 14.0, -0.6), Vec3::new(3.0, -8.0, 0.0)),
        (Vec3::new(36.0, 6.0, -0.6), Vec3::new(-9.0, -2.0, 0.0)),
        (Vec3::new(8.0, -10.0, -0.6), Vec3::new(5.0, 5.0, 0.0)),
        (Vec3::new(28.0, 0.0, -0.6), Vec3::new(-12.0, 0.0, 0.0)),
        (Vec3::new(16.0, 26.0, -0.6), Vec3::new(2.0, -13.0, 0.0)),
    ];
    for (start, vel) in courses {
        objects.push(MovingObject {
            half_extents: Vec3::new(1.8, 0.9, 0.7),
            initial_center: start,
            velocity: vel,
            angular_velocity: Vec3::zeros(),
        });
    }
    SceneSpec {
        name: "intersection".into(),
        static_surfaces: vec![
            strip(-10.0, 50.0, -22.0, 22.0, -1.5),
            wall_x(-10.0, 10.0, -12.0, -1.5, 4.5),
            wall_x(-10.0, 10.0, 12.0, -1.5, 4.5),
            wall_x(34.0, 50.0, -12.0, -1.5, 4.5),
            wall_x(34.0, 50.0, 12.0, -1.5, 4.5),
        ],
        objects,
        trajectory: vec![TrajectorySegment {
            duration: 1.0,
            omega: Vec3::new(0.0, 0.0, 0.02),
            v: Vec3::new(3.0, 0.0, 0.0),
        }],
        scan_rate: 10.0,
        points_per_scan: 9000,
        n_frames: 8,
        noise: NoiseSpec {
            sigma_doppler: 0.1,
            sigma_range: 0.02,
        },
        seed: 7003,
        range_min: 0.5,
        range_max: 200.0,
    }
}

/// Translation-degenerate corridor: exactly two parallel wall planes. The
/// point-to-plane term cannot observe motion along the corridor axis; the
/// Doppler residual keeps rotation constrained.
fn tunnel() -> SceneSpec {
    SceneSpec {
        name: "tunnel".into(),
        static_surfaces: vec![
            wall_x(-40.0, 160.0, -4.0, -3.0, 3.0),
            wall_x(-40.0, 160.0, 4.0, -3.0, 3.0),
        ],
        objects: vec![],
        trajectory: vec![
            TrajectorySegment {
                duration: 0.3,
                omega: Vec3::zeros(),
                v: Vec3::new(20.0, 0.0, 0.0),
            },
            TrajectorySegment {
                duration: 0.3,
                omega: Vec3::new(0.0, 0.0, 0.02),
                v: Vec3::new(19.0, 0.0, 0.0),
            },
            TrajectorySegment {
                duration: 0.3,
                omega: Vec3::new(0.0, 0.0, -0.03),
                v: Vec3::new(21.0, 0.0, 0.0),
            },
        ],
        scan_rate: 10.0,
        points_per_scan: 6000,
        n_frames: 8,
        noise: NoiseSpec {
            sigma_doppler: 0.1,
            sigma_range: 0.02,
        },
        seed: 7004,
        range_min: 0.5,
        range_max: 200.0,
    }
}
