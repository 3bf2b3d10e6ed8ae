//! Minimal SE(3)/SO(3) machinery shared by every other module.
//!
//! Rotations are stored as 3x3 matrices; quaternions appear only at the
//! trajectory I/O boundary. The exp/log maps switch to Taylor expansions
//! below [`SMALL_ANGLE`] to stay stable near the identity.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use thiserror::Error;

/// 3D vector of f64 components. Units are context dependent: meters for
/// positions, m/s for linear velocities, rad/s for angular rates.
pub type Vec3 = Vector3<f64>;

/// Rotation angle below which exp/log use their Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-6;

/// Tolerance for the orthonormality and determinant checks on [`Rot3`].
pub const ROT_TOL: f64 = 1e-9;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("matrix is not a rotation (orthonormality or determinant check failed)")]
    NotARotation,
    #[error("rotation angle {angle} is too close to pi; log map branch is ambiguous")]
    BranchAmbiguity { angle: f64 },
}

/// Rotation in SO(3), kept orthonormal (R^T R = I, det R = +1 within 1e-9).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot3(Matrix3<f64>);

impl Rot3 {
    pub fn identity() -> Self {
        Rot3(Matrix3::identity())
    }

    /// Builds a rotation from a matrix, validating the SO(3) invariants.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if !m.iter().all(|x| x.is_finite()) {
            return Err(GeometryError::NonFinite("rotation matrix"));
        }
        let gram = m.transpose() * m;
        let ortho_err = (gram - Matrix3::identity()).abs().max();
        if ortho_err > ROT_TOL || (m.determinant() - 1.0).abs() > ROT_TOL {
            return Err(GeometryError::NotARotation);
        }
        Ok(Rot3(m))
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Rot3::identity();
        }
        Rot3(rodrigues(&(axis * (angle / n))))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Rot3 {
        Rot3(self.0.transpose())
    }

    /// Principal rotation angle in [0, pi]. Uses atan2 of the skew part
    /// against the trace, which stays accurate near 0 and pi where acos of
    /// the trace alone loses half the digits.
    pub fn angle(&self) -> f64 {
        let r = &self.0;
        let sin_vec = Vec3::new(
            (r[(2, 1)] - r[(1, 2)]) * 0.5,
            (r[(0, 2)] - r[(2, 0)]) * 0.5,
            (r[(1, 0)] - r[(0, 1)]) * 0.5,
        );
        let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        sin_vec.norm().atan2(cos)
    }

    /// Re-projects onto SO(3) through the quaternion double cover. Used when
    /// composing long pose chains to shed accumulated round-off.
    pub fn renormalized(&self) -> Rot3 {
        let q = UnitQuaternion::from_matrix(&self.0);
        Rot3(q.to_rotation_matrix().into_inner())
    }

    pub fn to_quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_matrix(&self.0)
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>) -> Rot3 {
        Rot3(q.to_rotation_matrix().into_inner())
    }
}

impl std::ops::Mul<Rot3> for Rot3 {
    type Output = Rot3;
    fn mul(self, rhs: Rot3) -> Rot3 {
        Rot3(self.0 * rhs.0)
    }
}

impl std::ops::Mul<Vec3> for Rot3 {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Rigid transform in SE(3): p -> R p + t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rot3,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Rot3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Rot3, translation: Vec3) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    /// Applies the transform to a point: R p + t.
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation.0 * p + self.translation
    }

    /// Composition: (self * other) applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: Rot3(self.rotation.0 * other.rotation.0),
            translation: self.rotation.0 * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.0.transpose();
        Pose {
            rotation: Rot3(rt),
            translation: -(rt * self.translation),
        }
    }

    /// Composition with re-orthonormalization, for long odometry chains.
    pub fn compose_renormalized(&self, other: &Pose) -> Pose {
        let p = self.compose(other);
        Pose {
            rotation: p.rotation.renormalized(),
            translation: p.translation,
        }
    }
}

impl std::ops::Mul<&Pose> for &Pose {
    type Output = Pose;
    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}

/// Body twist: angular rate `omega` (rad/s) and linear velocity `v` (m/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    pub omega: Vec3,
    pub v: Vec3,
}

impl Twist {
    pub fn zero() -> Self {
        Twist {
            omega: Vec3::zeros(),
            v: Vec3::zeros(),
        }
    }

    pub fn new(omega: Vec3, v: Vec3) -> Self {
        Twist { omega, v }
    }

    pub fn is_finite(&self) -> bool {
        self.omega.iter().all(|x| x.is_finite()) && self.v.iter().all(|x| x.is_finite())
    }

    pub fn scaled(&self, s: f64) -> Twist {
        Twist {
            omega: self.omega * s,
            v: self.v * s,
        }
    }

    /// Max-norm over all six components.
    pub fn max_abs(&self) -> f64 {
        self.omega.abs().max().max(self.v.abs().max())
    }
}

impl std::ops::Neg for Twist {
    type Output = Twist;
    fn neg(self) -> Twist {
        Twist {
            omega: -self.omega,
            v: -self.v,
        }
    }
}

/// Skew-symmetric matrix such that skew(a) * b = a x b.
pub fn skew(w: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

fn rodrigues(phi: &Vec3) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let k = skew(phi);
    let (a, b) = if theta < SMALL_ANGLE {
        // sin(t)/t and (1-cos(t))/t^2
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Exponential map: the rigid transform produced by holding twist `xi`
/// constant for `dt` seconds.
pub fn exp_se3(xi: &Twist, dt: f64) -> Result<Pose, GeometryError> {
    if !xi.is_finite() || !dt.is_finite() {
        return Err(GeometryError::NonFinite("twist or dt"));
    }
    let phi = xi.omega * dt;
    let rho = xi.v * dt;
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let k = skew(&phi);
    let (a, b, c) = if theta < SMALL_ANGLE {
        (
            1.0 - theta2 / 6.0,
            0.5 - theta2 / 24.0,
            1.0 / 6.0 - theta2 / 120.0,
        )
    } else {
        (
            theta.sin() / theta,
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    let r = Matrix3::identity() + k * a + k * k * b;
    let v_mat = Matrix3::identity() + k * b + k * k * c;
    Ok(Pose {
        rotation: Rot3(r),
        translation: v_mat * rho,
    })
}

/// Logarithm map, principal branch. `exp_se3(log_se3(T), 1) == T` within
/// 1e-9 for rotation angles below pi - 1e-6.
pub fn log_se3(t: &Pose) -> Result<Twist, GeometryError> {
    let r = &t.rotation.0;
    if !t.translation.iter().all(|x| x.is_finite()) {
        return Err(GeometryError::NonFinite("pose translation"));
    }
    let cos_theta = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    if theta > std::f64::consts::PI - 1e-6 {
        return Err(GeometryError::BranchAmbiguity { angle: theta });
    }
    // vee(R - R^T) / 2 = sin(theta)/theta * phi
    let half_vee = Vec3::new(
        (r[(2, 1)] - r[(1, 2)]) * 0.5,
        (r[(0, 2)] - r[(2, 0)]) * 0.5,
        (r[(1, 0)] - r[(0, 1)]) * 0.5,
    );
    let theta2 = theta * theta;
    let phi = if theta < SMALL_ANGLE {
        // theta/sin(theta) ~ 1 + t^2/6 + 7 t^4/360
        half_vee * (1.0 + theta2 / 6.0 + 7.0 * theta2 * theta2 / 360.0)
    } else {
        half_vee * (theta / theta.sin())
    };
    let k = skew(&phi);
    let c = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        (1.0 - 0.5 * theta * theta.sin() / (1.0 - theta.cos())) / theta2
    };
    let v_inv = Matrix3::identity() - k * 0.5 + k * k * c;
    Ok(Twist {
        omega: phi,
        v: v_inv * t.translation,
    })
}
