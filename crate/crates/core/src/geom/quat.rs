use std::ops::{Mul, Neg};

use nalgebra::Matrix3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GeomError, Vec3};

/// Below this quaternion-space angle slerp falls back to normalized lerp.
const SLERP_LINEAR_THRESHOLD: f64 = 1e-9;

/// A rotation stored as a unit quaternion `(w, x, y, z)`.
///
/// Every constructor and every operation returns a renormalized value, so
/// the norm stays within `1e-9` of one. `q` and `-q` encode the same
/// rotation; use [`UnitQuat::same_rotation`] rather than `==` when the sign
/// should not matter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuat {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    /// Normalizes `(w, x, y, z)`. Fails on zero or non-finite input.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self, GeomError> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n < 1e-12 {
            return Err(GeomError::InvalidQuaternion { w, x, y, z });
        }
        Ok(Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    /// Builds from components assumed to be (nearly) unit length.
    fn renormalized(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        }
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n < 1e-15 || angle == 0.0 {
            return Self::IDENTITY;
        }
        let a = axis / n;
        let (s, c) = (0.5 * angle).sin_cos();
        Self::renormalized(c, a.x * s, a.y * s, a.z * s)
    }

    /// Exponential map: the rotation by `|v|` radians about `v`.
    pub fn from_rotation_vector(v: &Vec3) -> Self {
        Self::from_axis_angle(v, v.norm())
    }

    /// Minimal rotation taking direction `from` onto direction `to`.
    ///
    /// Opposite directions have no unique minimal rotation; the half turn is
    /// then taken about whichever of x or y is least aligned with `from`.
    pub fn from_two_vectors(from: &Vec3, to: &Vec3) -> Self {
        let a = from.normalize();
        let b = to.normalize();
        let d = a.dot(&b);
        if d < -1.0 + 1e-12 {
            let fallback = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            let axis = a.cross(&fallback).normalize();
            return Self::from_axis_angle(&axis, std::f64::consts::PI);
        }
        let c = a.cross(&b);
        Self::renormalized(1.0 + d, c.x, c.y, c.z)
    }

    /// Quaternion of a proper rotation matrix (Shepperd's method).
    pub fn from_rotation_matrix(m: &Matrix3<f64>) -> Self {
        let tr = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        if tr > 0.0 {
            let s = 2.0 * (1.0 + tr).sqrt();
            Self::renormalized(
                0.25 * s,
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            )
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt();
            Self::renormalized(
                (m[(2, 1)] - m[(1, 2)]) / s,
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            )
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt();
            Self::renormalized(
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            )
        } else {
            let s = 2.0 * (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt();
            Self::renormalized(
                (m[(1, 0)] - m[(0, 1)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
            )
        }
    }

    /// Rotation whose frame has the given x axis and (after orthogonalization) y axis.
    pub fn from_frame_axes(x_axis: &Vec3, y_hint: &Vec3) -> Self {
        let x = x_axis.normalize();
        let z = x.cross(y_hint).normalize();
        let y = z.cross(&x);
        Self::from_rotation_matrix(&Matrix3::from_columns(&[x, y, z]))
    }

    /// Uniformly distributed rotation (Shoemake's subgroup algorithm).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
        let u3: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
        let a = (1.0 - u1).sqrt();
        let b = u1.sqrt();
        Self::renormalized(b * u3.cos(), a * u2.sin(), a * u2.cos(), b * u3.sin())
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    /// Components in `[w, x, y, z]` order.
    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn vector_part(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn conjugate(&self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn inverse(&self) -> Self {
        self.conjugate()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        // v + 2w (u x v) + 2 u x (u x v)
        let u = self.vector_part();
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(&t)
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        2.0 * self.vector_part().norm().atan2(self.w.abs())
    }

    /// Geodesic distance on SO(3): the angle of `self^-1 * other`, in `[0, pi]`.
    pub fn angle_to(&self, other: &Self) -> f64 {
        if self == other || *self == -*other {
            return 0.0;
        }
        (self.inverse() * *other).angle()
    }

    /// Unit axis and angle in `[0, pi]`; the axis is `x` for the identity.
    pub fn axis_angle(&self) -> (Vec3, f64) {
        let q = if self.w < 0.0 { -*self } else { *self };
        let v = q.vector_part();
        let n = v.norm();
        if n < 1e-15 {
            return (Vec3::x(), 0.0);
        }
        (v / n, 2.0 * n.atan2(q.w))
    }

    /// Logarithm map: rotation vector with norm in `[0, pi]`.
    pub fn to_rotation_vector(&self) -> Vec3 {
        let (axis, angle) = self.axis_angle();
        axis * angle
    }

    pub fn same_rotation(&self, other: &Self, tol: f64) -> bool {
        self.dot(other).abs() >= 1.0 - tol
    }

    /// Z-Y-X Euler angles `(yaw, pitch, roll)` with `R = Rz(yaw) Ry(pitch) Rx(roll)`.
    pub fn to_euler_zyx(&self) -> (f64, f64, f64) {
        let m = self.to_matrix();
        let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
        let yaw = m[(1, 0)].atan2(m[(0, 0)]);
        let roll = m[(2, 1)].atan2(m[(2, 2)]);
        (yaw, pitch, roll)
    }

    /// Spherical linear interpolation along the shorter arc.
    ///
    /// `u = 0` and `u = 1` return the inputs unchanged (bit for bit). When
    /// `dot(self, other) < 0` the end point is negated first; an exact zero
    /// dot product is not flipped. Inputs that already encode the same
    /// rotation up to sign interpolate to a constant.
    pub fn slerp(&self, other: &Self, u: f64) -> Self {
        if u <= 0.0 || self == other {
            return *self;
        }
        if u >= 1.0 {
            return *other;
        }
        let mut end = *other;
        let mut d = self.dot(other);
        if d < 0.0 {
            end = -end;
            d = -d;
        }
        // half-angle between the quaternions, robust near zero
        let rel = self.inverse() * end;
        let theta = rel.vector_part().norm().atan2(d);
        if theta < SLERP_LINEAR_THRESHOLD {
            return Self::renormalized(
                self.w + (end.w - self.w) * u,
                self.x + (end.x - self.x) * u,
                self.y + (end.y - self.y) * u,
                self.z + (end.z - self.z) * u,
            );
        }
        let sin_theta = theta.sin();
        let a = ((1.0 - u) * theta).sin() / sin_theta;
        let b = (u * theta).sin() / sin_theta;
        Self::renormalized(
            a * self.w + b * end.w,
            a * self.x + b * end.x,
            a * self.y + b * end.y,
            a * self.z + b * end.z,
        )
    }
}

impl Default for UnitQuat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Mul for UnitQuat {
    type Output = UnitQuat;

    fn mul(self, r: UnitQuat) -> UnitQuat {
        let l = self;
        UnitQuat::renormalized(
            l.w * r.w - l.x * r.x - l.y * r.y - l.z * r.z,
            l.w * r.x + l.x * r.w + l.y * r.z - l.z * r.y,
            l.w * r.y - l.x * r.z + l.y * r.w + l.z * r.x,
            l.w * r.z + l.x * r.y - l.y * r.x + l.z * r.w,
        )
    }
}

impl Neg for UnitQuat {
    type Output = UnitQuat;

    fn neg(self) -> UnitQuat {
        UnitQuat {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }
}

/// Largest `| |q| - 1 |` accepted when reading a stored quaternion.
pub const DESERIALIZE_NORM_TOLERANCE: f64 = 1e-6;

impl TryFrom<[f64; 4]> for UnitQuat {
    type Error = GeomError;

    /// Stored components are kept bit-for-bit when already unit length (so a
    /// serialize/deserialize round trip is exact), lightly drifted ones are
    /// renormalized, anything else is rejected.
    fn try_from(q: [f64; 4]) -> Result<Self, GeomError> {
        let [w, x, y, z] = q;
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > DESERIALIZE_NORM_TOLERANCE {
            return Err(GeomError::NonUnitQuaternion { norm });
        }
        if (norm - 1.0).abs() <= 1e-9 {
            return Ok(Self { w, x, y, z });
        }
        Ok(Self::renormalized(w, x, y, z))
    }
}

impl From<UnitQuat> for [f64; 4] {
    fn from(q: UnitQuat) -> [f64; 4] {
        q.to_array()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::SymmetricEigen;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn z_rot(a: f64) -> UnitQuat {
        UnitQuat::from_axis_angle(&Vec3::z(), a)
    }

    #[test]
    fn stored_quaternion_tolerance() {
        let q = UnitQuat::from_axis_angle(&Vec3::new(1.0, 2.0, 3.0), 0.7);
        let text = serde_json::to_string(&q).unwrap();
        let back: UnitQuat = serde_json::from_str(&text).unwrap();
        assert_eq!(back, q);
        let drift = UnitQuat::try_from([1.0 + 5e-7, 0.0, 0.0, 0.0]).unwrap();
        assert!(drift.angle_to(&UnitQuat::IDENTITY) < 1e-9);
        assert!(matches!(
            UnitQuat::try_from([0.9, 0.0, 0.0, 0.0]),
            Err(GeomError::NonUnitQuaternion { .. })
        ));
        assert!(serde_json::from_str::<UnitQuat>("[0, 0, 0, 0]").is_err());
        assert!(serde_json::from_str::<UnitQuat>("[1, 0, 0]").is_err());
    }

    #[test]
    fn slerp_same_input_is_identity() {
        let q = UnitQuat::from_axis_angle(&Vec3::new(1.0, 2.0, 3.0), 0.7);
        assert_eq!(q.slerp(&q, 0.5), q);
    }

    #[test]
    fn slerp_half_of_quarter_turn() {
        let q = UnitQuat::identity().slerp(&z_rot(FRAC_PI_2), 0.5);
        assert!(q.same_rotation(&z_rot(FRAC_PI_4), 1e-12));
    }

    /// Fractional matrix power `R^u` through the eigen-decomposition of the
    /// symmetric matrix log generator: `R = exp(K)`, `K = theta [a]x`, and
    /// `a` is the eigenvector of `(R + R^T)/2` with eigenvalue 1.
    fn matrix_fractional_power(r: &Matrix3<f64>, u: f64) -> Matrix3<f64> {
        let sym = (r + r.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let (i, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(i, v)| (i, (v - 1.0).abs()))
            .fold((0, f64::MAX), |acc, x| if x.1 < acc.1 { x } else { acc });
        let mut axis: Vec3 = eig.eigenvectors.column(i).into();
        let cos_t = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        let skew = (r - r.transpose()) * 0.5;
        let sin_vec = Vec3::new(skew[(2, 1)], skew[(0, 2)], skew[(1, 0)]);
        if sin_vec.dot(&axis) < 0.0 {
            axis = -axis;
        }
        let theta = sin_vec.norm().atan2(cos_t);
        let k = nalgebra::Matrix3::new(
            0.0, -axis.z, axis.y, axis.z, 0.0, -axis.x, -axis.y, axis.x, 0.0,
        );
        let a = u * theta;
        Matrix3::identity() + k * a.sin() + k * k * (1.0 - a.cos())
    }

    #[test]
    fn slerp_matches_matrix_power_oracle() {
        let q1 = UnitQuat::from_axis_angle(&Vec3::x(), 170f64.to_radians());
        let q = UnitQuat::identity().slerp(&q1, 0.25);
        let expected = matrix_fractional_power(&q1.to_matrix(), 0.25);
        assert_abs_diff_eq!(q.to_matrix(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(q.angle(), 42.5f64.to_radians(), epsilon = 1e-12);
    }

    #[test]
    fn slerp_takes_short_arc() {
        let a = z_rot(0.1);
        let b = -z_rot(0.3);
        let m = a.slerp(&b, 0.5);
        assert!(m.same_rotation(&z_rot(0.2), 1e-12));
    }

    #[test]
    fn slerp_same_rotation_opposite_sign_is_constant() {
        let a = z_rot(1.0);
        let m = a.slerp(&-a, 0.3);
        assert!(m.same_rotation(&a, 1e-12));
    }

    #[test]
    fn slerp_half_turn_is_deterministic() {
        let a = UnitQuat::identity();
        let b = UnitQuat::from_axis_angle(&Vec3::y(), PI);
        assert_abs_diff_eq!(a.dot(&b), 0.0, epsilon = 1e-15);
        let m1 = a.slerp(&b, 0.5);
        let m2 = a.slerp(&b, 0.5);
        assert_eq!(m1, m2);
        assert_abs_diff_eq!(m1.angle(), FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn slerp_path_length_is_linear_in_u() {
        let a = UnitQuat::from_axis_angle(&Vec3::new(0.3, -1.0, 0.2), 0.4);
        let b = UnitQuat::from_axis_angle(&Vec3::new(1.0, 1.0, 0.0), 2.5);
        let total = a.angle_to(&b);
        for i in 0..=50 {
            let u = i as f64 / 50.0;
            let m = a.slerp(&b, u);
            assert_abs_diff_eq!(a.angle_to(&m), u * total, epsilon = 1e-6);
        }
    }

    #[test]
    fn rotate_matches_matrix() {
        let q = UnitQuat::from_axis_angle(&Vec3::new(0.2, 0.5, -0.7), 1.3);
        let v = Vec3::new(0.3, -2.0, 1.5);
        assert_abs_diff_eq!(q.rotate(&v), q.to_matrix() * v, epsilon = 1e-12);
    }

    #[test]
    fn two_vector_rotation_handles_opposites() {
        let q = UnitQuat::from_two_vectors(&Vec3::z(), &-Vec3::z());
        assert_abs_diff_eq!(q.rotate(&Vec3::z()), -Vec3::z(), epsilon = 1e-12);
        let q = UnitQuat::from_two_vectors(&Vec3::new(1.0, 2.0, 0.5), &Vec3::new(-0.3, 0.1, 1.0));
        assert_abs_diff_eq!(
            q.rotate(&Vec3::new(1.0, 2.0, 0.5).normalize()),
            Vec3::new(-0.3, 0.1, 1.0).normalize(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn zero_quaternion_is_rejected() {
        assert!(UnitQuat::new(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(UnitQuat::new(f64::NAN, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn euler_roundtrip() {
        let q = UnitQuat::from_axis_angle(&Vec3::z(), 0.4)
            * UnitQuat::from_axis_angle(&Vec3::y(), -0.2)
            * UnitQuat::from_axis_angle(&Vec3::x(), 0.3);
        let (yaw, pitch, roll) = q.to_euler_zyx();
        assert_abs_diff_eq!(yaw, 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(pitch, -0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(roll, 0.3, epsilon = 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn quat() -> impl Strategy<Value = UnitQuat> {
            (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
                .prop_filter("non-degenerate", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-3)
                .prop_map(|(w, x, y, z)| UnitQuat::new(w, x, y, z).unwrap())
        }

        proptest! {
            #[test]
            fn operations_stay_unit(a in quat(), b in quat(), u in 0.0..1.0f64) {
                let n = |q: UnitQuat| q.dot(&q).sqrt();
                prop_assert!((n(a * b) - 1.0).abs() < 1e-9);
                prop_assert!((n(a.slerp(&b, u)) - 1.0).abs() < 1e-9);
                prop_assert!((n(a.inverse()) - 1.0).abs() < 1e-9);
            }

            #[test]
            fn negation_is_same_rotation(a in quat()) {
                prop_assert!(a.same_rotation(&-a, 1e-12));
                prop_assert!(a.angle_to(&-a) < 1e-7);
            }

            #[test]
            fn matrix_round_trip(a in quat()) {
                let b = UnitQuat::from_rotation_matrix(&a.to_matrix());
                prop_assert!(a.same_rotation(&b, 1e-12));
            }
        }
    }
}
