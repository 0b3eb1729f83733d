//! SO(3) and rigid-transform primitives.
//!
//! Rotations are stored as unit quaternions. Every composition renormalizes, so
//! the unit-norm invariant holds to machine precision regardless of how many
//! products are chained.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Below this angle (rad) `exp`/`log` switch to their Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-6;

/// Quaternion scalar parts at or below this are treated as an exact half-turn.
const HALF_TURN_EPS: f64 = 1e-15;

/// Skew-symmetric matrix such that `hat(a) * b == a.cross(&b)`.
pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`]. The input is symmetrized first so small asymmetries
/// from accumulated round-off do not bias the result.
pub fn vee(m: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

#[derive(Clone, Copy, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(UnitQuaternion::identity())
    }

    /// Builds from quaternion components. Inputs already unit-norm to 1e-12 are
    /// kept bit-exact so file round-trips are lossless; anything else is normalized.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Self {
        let q = Quaternion::new(w, x, y, z);
        let n2 = q.norm_squared();
        if (n2 - 1.0).abs() <= 1e-12 {
            Rotation(UnitQuaternion::new_unchecked(q))
        } else {
            Rotation(UnitQuaternion::new_normalize(q))
        }
    }

    pub fn from_unit_quaternion(q: UnitQuaternion<f64>) -> Self {
        Rotation(q)
    }

    /// Nearest rotation to an arbitrary 3x3 matrix.
    pub fn from_matrix(m: &Mat3) -> Self {
        Rotation(UnitQuaternion::from_matrix(m))
    }

    /// Roll/pitch/yaw (rad), applied as `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Self {
        Rotation(UnitQuaternion::from_euler_angles(roll, pitch, yaw))
    }

    /// `(roll, pitch, yaw)` matching [`Rotation::from_euler`].
    pub fn euler(&self) -> (f64, f64, f64) {
        self.0.euler_angles()
    }

    /// Rotation about a unit axis.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        Self::exp(&(axis.normalize() * angle))
    }

    /// Smallest rotation taking direction `from` onto direction `to`.
    pub fn between(from: &Vec3, to: &Vec3) -> Option<Self> {
        UnitQuaternion::rotation_between(from, to).map(Rotation)
    }

    /// Exponential map (Rodrigues) from a rotation vector.
    pub fn exp(v: &Vec3) -> Self {
        let theta2 = v.norm_squared();
        let theta = theta2.sqrt();
        let (w, s) = if theta < SMALL_ANGLE {
            (1.0 - theta2 / 8.0, 0.5 - theta2 / 48.0)
        } else {
            let half = 0.5 * theta;
            (half.cos(), half.sin() / theta)
        };
        Rotation(UnitQuaternion::new_unchecked(Quaternion::new(
            w,
            s * v.x,
            s * v.y,
            s * v.z,
        )))
    }

    /// Logarithm on the principal branch, `|result| <= pi`.
    ///
    /// At exactly a half-turn the axis sign is ambiguous; the axis component with
    /// the largest magnitude is made positive. That component is also the one with
    /// the largest diagonal entry of the matrix form (`R_ii = 2 a_i^2 - 1` at pi).
    pub fn log(&self) -> Vec3 {
        let q = self.0.quaternion();
        let (mut w, mut v) = (q.w, q.imag());
        if w < 0.0 {
            w = -w;
            v = -v;
        }
        let n = v.norm();
        if n < 0.5 * SMALL_ANGLE {
            // atan(n / w) * 2 / n, expanded.
            return v * (2.0 / w) * (1.0 - n * n / (3.0 * w * w));
        }
        if w <= HALF_TURN_EPS {
            let axis = v / n;
            let dominant = axis.iamax();
            let sign = if axis[dominant] < 0.0 { -1.0 } else { 1.0 };
            return axis * (sign * PI);
        }
        let theta = 2.0 * n.atan2(w);
        v * (theta / n)
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.inverse())
    }

    pub fn matrix(&self) -> Mat3 {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn unit_quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    /// `[x, y, z, w]`, the order used by the TUM and trajectory file formats.
    pub fn xyzw(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.i, q.j, q.k, q.w]
    }

    /// Geodesic angle to another rotation (rad).
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        (self.inverse() * *other).log().norm()
    }

    pub fn renormalized(&self) -> Self {
        Rotation(UnitQuaternion::new_normalize(self.0.into_inner()))
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl fmt::Debug for Rotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [x, y, z, w] = self.xyzw();
        write!(f, "Rotation(w={w}, x={x}, y={y}, z={z})")
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(UnitQuaternion::new_normalize(
            self.0.into_inner() * rhs.0.into_inner(),
        ))
    }
}

impl Mul<Vec3> for Rotation {
    type Output = Vec3;

    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0.transform_vector(&rhs)
    }
}

impl Mul<&Vec3> for &Rotation {
    type Output = Vec3;

    fn mul(self, rhs: &Vec3) -> Vec3 {
        self.0.transform_vector(rhs)
    }
}

/// `^B_A T`: maps points expressed in frame A into frame B.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct RigidTransform {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), Vec3::zeros())
    }

    pub fn inverse(&self) -> Self {
        let r_inv = self.rotation.inverse();
        Self::new(r_inv, -(r_inv * self.translation))
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        &self.rotation * p + self.translation
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Rotation angle (rad) and translation distance (m) between two transforms.
    pub fn distance_to(&self, other: &RigidTransform) -> (f64, f64) {
        (
            self.rotation.angle_to(&other.rotation),
            (self.translation - other.translation).norm(),
        )
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        RigidTransform::new(
            self.rotation * rhs.rotation,
            self.rotation * rhs.translation + self.translation,
        )
    }
}

impl Mul<Vec3> for RigidTransform {
    type Output = Vec3;

    fn mul(self, rhs: Vec3) -> Vec3 {
        self.transform_point(&rhs)
    }
}
