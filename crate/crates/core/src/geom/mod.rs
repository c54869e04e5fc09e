//! Points, rigid transforms, exact nearest-neighbor search, the Huber
//! penalty, Kabsch alignment and the part-restricted one-sided Chamfer term.

pub(crate) mod chamfer;
mod kabsch;
mod nn;
pub mod so3;

pub use chamfer::{data_term, Correspondence, PartIndex};
pub use kabsch::kabsch;
pub use nn::{dist2, NnIndex};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = Vector3<f64>;

/// Default Huber transition, in meters.
pub const DEFAULT_HUBER_DELTA: f64 = 0.05;

/// A proper rigid motion `x ↦ R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Largest deviation from `RᵀR = I` and `det R = 1`.
    pub fn orthonormality_error(&self) -> f64 {
        let e = (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max();
        e.max((self.rotation.determinant() - 1.0).abs())
    }
}

/// Huber penalty of a residual norm: `½r²` up to `delta`, linear beyond.
pub fn huber(residual_norm: f64, delta: f64) -> Result<f64> {
    if !residual_norm.is_finite() || !delta.is_finite() {
        return Err(Error::NonFinite("huber input"));
    }
    if residual_norm < 0.0 || delta <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "huber requires r >= 0 and delta > 0 (r = {residual_norm}, delta = {delta})"
        )));
    }
    Ok(huber_unchecked(residual_norm, delta))
}

#[inline]
pub(crate) fn huber_unchecked(r: f64, delta: f64) -> f64 {
    if r <= delta {
        0.5 * r * r
    } else {
        delta * (r - 0.5 * delta)
    }
}

/// Derivative of [`huber`] with respect to the residual norm.
#[inline]
pub fn huber_derivative(r: f64, delta: f64) -> f64 {
    if r <= delta {
        r
    } else {
        delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn huber_examples() {
        assert_eq!(huber(0.0, 0.05).unwrap(), 0.0);
        assert_abs_diff_eq!(huber(0.05, 0.05).unwrap(), 0.00125, epsilon = 1e-12);
        assert_abs_diff_eq!(huber(0.10, 0.05).unwrap(), 0.05 * (0.10 - 0.025), epsilon = 1e-12);
        assert_abs_diff_eq!(huber(0.10, 0.05).unwrap(), 0.00375, epsilon = 1e-12);
    }

    #[test]
    fn huber_rejects_bad_input() {
        assert!(matches!(huber(f64::NAN, 0.05), Err(Error::NonFinite(_))));
        assert!(matches!(huber(0.1, f64::INFINITY), Err(Error::NonFinite(_))));
        assert!(huber(-0.1, 0.05).is_err());
        assert!(huber(0.1, 0.0).is_err());
    }

    #[test]
    fn huber_derivative_continuous_at_delta() {
        let d = 0.05;
        let h = 1e-7;
        let left = (huber(d, d).unwrap() - huber(d - h, d).unwrap()) / h;
        let right = (huber(d + h, d).unwrap() - huber(d, d).unwrap()) / h;
        assert!((left - right).abs() < 1e-6);
    }

    #[test]
    fn rigid_inverse_composes_to_identity() {
        let t = RigidTransform::new(so3::exp(&Vector3::new(0.3, -0.2, 1.1)), Vector3::new(1.0, 2.0, 3.0));
        let id = t.compose(&t.inverse());
        assert!((id.rotation - Matrix3::identity()).abs().max() < 1e-12);
        assert!(id.translation.norm() < 1e-12);
    }
}
