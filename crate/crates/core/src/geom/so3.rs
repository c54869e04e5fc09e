//! Axis-angle rotation helpers.

use nalgebra::{Matrix3, Vector3};
use std::f64::consts::PI;

#[inline]
pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rodrigues' formula.
pub fn exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let t2 = w.norm_squared();
    let k = hat(w);
    let (a, b) = if t2 < 1e-12 {
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        let t = t2.sqrt();
        (t.sin() / t, (1.0 - t.cos()) / t2)
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Left Jacobian: `exp(w + δ) ≈ exp(J_l(w)·δ)·exp(w)`.
pub fn left_jacobian(w: &Vector3<f64>) -> Matrix3<f64> {
    let t2 = w.norm_squared();
    let k = hat(w);
    let (a, b) = if t2 < 1e-10 {
        (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let t = t2.sqrt();
        ((1.0 - t.cos()) / t2, (t - t.sin()) / (t2 * t))
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Axis-angle vector of a rotation matrix, angle in `[0, π]`.
pub fn log(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let angle = cos.acos();
    let skew = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    if angle < 1e-8 {
        return skew * 0.5;
    }
    if PI - angle < 1e-6 {
        // Near π the skew part vanishes; recover the axis from R + I instead.
        let b = (r + Matrix3::identity()) * 0.5;
        let diag = Vector3::new(b[(0, 0)], b[(1, 1)], b[(2, 2)]);
        let i = diag.imax();
        let mut axis = b.column(i).into_owned() / diag[i].max(1e-300).sqrt();
        if axis.dot(&skew) < 0.0 {
            axis = -axis;
        }
        return axis.normalize() * angle;
    }
    skew * (angle / (2.0 * angle.sin()))
}

/// Rewrites an axis-angle vector so its angle is at most π, preserving the
/// rotation.
pub fn canonicalize(w: &Vector3<f64>) -> Vector3<f64> {
    let t = w.norm();
    if t <= PI {
        return *w;
    }
    let m = t % (2.0 * PI);
    let axis = w / t;
    if m <= PI {
        axis * m
    } else {
        axis * (m - 2.0 * PI)
    }
}

pub fn rot_z(angle: f64) -> Matrix3<f64> {
    exp(&Vector3::new(0.0, 0.0, angle))
}
