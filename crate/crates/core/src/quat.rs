//! Unit-quaternion algebra.
//!
//! Convention: scalar-first `(w, x, y, z)`, rotating sensor-frame vectors into
//! the navigation frame. Composition `a * b` is the Hamilton product, so
//! `R(a * b) = R(a) R(b)`.

use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative norm deviation beyond which [`quat_to_rotmat`] reports a renormalization.
pub const NORM_WARN_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::identity()
    }
}

impl Quaternion {
    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub const fn identity() -> Self {
        Self::new(1.0, 0.0, 0.0, 0.0)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Exponential map of a rotation vector (axis times angle, radians).
    pub fn from_rotation_vector(phi: &Vector3<f64>) -> Self {
        let angle = phi.norm();
        if angle < 1e-12 {
            // second-order series keeps the result unit-norm to rounding
            let half = 0.5 * phi;
            return Self::new(1.0 - 0.125 * angle * angle, half.x, half.y, half.z).normalized();
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let axis = phi / angle;
        Self::new(c, s * axis.x, s * axis.y, s * axis.z)
    }

    /// Logarithm map, the inverse of [`Quaternion::from_rotation_vector`], with angle in `[0, pi]`.
    pub fn to_rotation_vector(&self) -> Vector3<f64> {
        let q = if self.w < 0.0 {
            Self::new(-self.w, -self.x, -self.y, -self.z)
        } else {
            *self
        };
        let v = q.vector();
        let s = v.norm();
        if s < 1e-12 {
            return 2.0 * v;
        }
        let angle = 2.0 * s.atan2(q.w);
        v * (angle / s)
    }

    /// Rotation from roll/pitch/yaw (Z-Y-X intrinsic).
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Self {
        let (sr, cr) = (0.5 * roll).sin_cos();
        let (sp, cp) = (0.5 * pitch).sin_cos();
        let (sy, cy) = (0.5 * yaw).sin_cos();
        Self::new(
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        )
    }

    pub fn from_rotation_matrix(m: &Matrix3<f64>) -> Self {
        // Shepperd's method
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let q = if trace > 0.0 {
            let s = 2.0 * (trace + 1.0).sqrt();
            Self::new(
                0.25 * s,
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            )
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt();
            Self::new(
                (m[(2, 1)] - m[(1, 2)]) / s,
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            )
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt();
            Self::new(
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            )
        } else {
            let s = 2.0 * (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt();
            Self::new(
                (m[(1, 0)] - m[(0, 1)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
            )
        };
        q.normalized()
    }

    /// Rotation matrix of the normalized quaternion.
    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        let q = self.normalized();
        let (w, x, y, z) = (q.w, q.x, q.y, q.z);
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

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.to_rotation_matrix() * v
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, r: Quaternion) -> Quaternion {
        Quaternion::new(
            self.w * r.w - self.x * r.x - self.y * r.y - self.z * r.z,
            self.w * r.x + self.x * r.w + self.y * r.z - self.z * r.y,
            self.w * r.y - self.x * r.z + self.y * r.w + self.z * r.x,
            self.w * r.z + self.x * r.y - self.y * r.x + self.z * r.w,
        )
    }
}

/// Rotation matrix of `q`.
///
/// The second element is `true` when `q` deviated from unit norm by more than
/// [`NORM_WARN_TOLERANCE`] and had to be renormalized first.
pub fn quat_to_rotmat(q: &Quaternion) -> (Matrix3<f64>, bool) {
    let renormalized = (q.norm() - 1.0).abs() > NORM_WARN_TOLERANCE;
    if renormalized {
        log::warn!("quaternion norm {} renormalized before conversion", q.norm());
    }
    (q.to_rotation_matrix(), renormalized)
}

/// Attitude after rotating for `dt` seconds at body rate `omega`.
///
/// Uses the exact axis-angle increment composed on the body side, so that
/// `R(q') = R(q) exp([omega dt]x)`.
pub fn quat_increment(q: &Quaternion, omega: &Vector3<f64>, dt: f64) -> Result<Quaternion> {
    if !(dt > 0.0) {
        return Err(Error::BadTimeStep { dt, max: f64::INFINITY });
    }
    let phi = omega * dt;
    let angle = phi.norm();
    if !angle.is_finite() {
        return Err(Error::NonFinite("angular rate".into()));
    }
    if angle > std::f64::consts::PI {
        return Err(Error::RotationTooLarge { angle });
    }
    Ok((*q * Quaternion::from_rotation_vector(&phi)).normalized())
}

/// Cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' formula for `exp([phi]x)`.
pub fn rotation_matrix_exp(phi: &Vector3<f64>) -> Matrix3<f64> {
    Quaternion::from_rotation_vector(phi).to_rotation_matrix()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn random_unit(seed: u64) -> Quaternion {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Quaternion::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalized()
    }

    /// Truncated Taylor series of the matrix exponential, independent of Rodrigues.
    fn expm_series(a: &Matrix3<f64>) -> Matrix3<f64> {
        let mut term = Matrix3::identity();
        let mut sum = Matrix3::identity();
        for k in 1..30 {
            term = term * a / k as f64;
            sum += term;
        }
        sum
    }

    #[test]
    fn identity_maps_to_identity_matrix() {
        let (r, renorm) = quat_to_rotmat(&Quaternion::identity());
        assert!(!renorm);
        assert_eq!(r, Matrix3::identity());
    }

    #[test]
    fn half_turn_about_z() {
        let (r, _) = quat_to_rotmat(&Quaternion::new(0.0, 0.0, 0.0, 1.0));
        let expected = Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0));
        assert!((r - expected).abs().max() < 1e-15);
    }

    #[test]
    fn rotation_matrix_is_orthonormal_and_matches_extended_precision_oracle() {
        for seed in 0..200 {
            let q = random_unit(seed);
            let (r, _) = quat_to_rotmat(&q);
            assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);

            // Oracle: R = (w^2 - |v|^2) I + 2 v v^T + 2 w [v]x, summed with compensated
            // (double-double style) products to stand in for extended precision.
            let (w, v) = (q.w, q.vector());
            let vv = v.x.mul_add(v.x, v.y.mul_add(v.y, v.z * v.z));
            let diag = w.mul_add(w, -vv);
            let oracle = Matrix3::identity() * diag + 2.0 * v * v.transpose() + 2.0 * w * skew(&v);
            assert!((r - oracle).abs().max() < 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn renormalization_is_flagged() {
        let q = Quaternion::new(2.0, 0.0, 0.0, 0.0);
        let (r, renorm) = quat_to_rotmat(&q);
        assert!(renorm);
        assert!((r - Matrix3::identity()).abs().max() < 1e-15);
    }

    #[test]
    fn zero_rate_leaves_attitude_unchanged() {
        let q = random_unit(7);
        let q2 = quat_increment(&q, &Vector3::zeros(), 0.005).unwrap();
        assert!((q2.w - q.w).abs() < 1e-15 && (q2.vector() - q.vector()).norm() < 1e-15);
    }

    #[test]
    fn half_turn_increment() {
        let q = quat_increment(&Quaternion::identity(), &Vector3::new(0.0, 0.0, PI), 1.0).unwrap();
        assert!(q.w.abs() < 1e-12);
        assert!(q.x.abs() < 1e-12 && q.y.abs() < 1e-12);
        assert!((q.z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_increment_matches_matrix_exponential() {
        let omega = Vector3::new(0.1, 0.0, 0.0);
        let q = quat_increment(&Quaternion::identity(), &omega, 0.005).unwrap();
        let expected = expm_series(&skew(&(omega * 0.005)));
        assert!((q.to_rotation_matrix() - expected).abs().max() < 1e-10);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let err = quat_increment(&Quaternion::identity(), &Vector3::new(0.0, 0.0, 4.0), 1.0);
        assert!(matches!(err, Err(Error::RotationTooLarge { .. })));
        assert!(quat_increment(&Quaternion::identity(), &Vector3::zeros(), 0.0).is_err());
    }

    #[test]
    fn log_inverts_exp() {
        let phi = Vector3::new(0.3, -1.2, 0.7);
        let back = Quaternion::from_rotation_vector(&phi).to_rotation_vector();
        assert!((back - phi).norm() < 1e-12);
    }

    #[test]
    fn matrix_round_trip() {
        for seed in 0..50 {
            let q = random_unit(seed + 1000);
            let back = Quaternion::from_rotation_matrix(&q.to_rotation_matrix());
            let same = (back.w - q.w).abs() + (back.vector() - q.vector()).norm();
            let flipped = (back.w + q.w).abs() + (back.vector() + q.vector()).norm();
            assert!(same.min(flipped) < 1e-12);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn increment_preserves_unit_norm(
                w in -1.0f64..1.0, x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
                ox in -20.0f64..20.0, oy in -20.0f64..20.0, oz in -20.0f64..20.0,
                dt in 1e-4f64..0.05,
            ) {
                prop_assume!(w * w + x * x + y * y + z * z > 1e-3);
                let q = Quaternion::new(w, x, y, z).normalized();
                let q2 = quat_increment(&q, &Vector3::new(ox, oy, oz), dt).unwrap();
                prop_assert!((q2.norm() - 1.0).abs() < 1e-9);
            }

            #[test]
            fn increment_composes_with_body_exponential(
                w in -1.0f64..1.0, x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
                ox in -10.0f64..10.0, oy in -10.0f64..10.0, oz in -10.0f64..10.0,
                dt in 1e-4f64..0.005,
            ) {
                prop_assume!(w * w + x * x + y * y + z * z > 1e-3);
                let omega = Vector3::new(ox, oy, oz);
                prop_assume!(omega.norm() * dt < 0.1);
                let q = Quaternion::new(w, x, y, z).normalized();
                let lhs = quat_increment(&q, &omega, dt).unwrap().to_rotation_matrix();
                let rhs = q.to_rotation_matrix() * expm_series(&skew(&(omega * dt)));
                prop_assert!((lhs - rhs).abs().max() < 1e-9);
            }
        }
    }
}
