use nalgebra::{Matrix3, Vector3, SVD};

use super::{Point3, RigidTransform};
use crate::error::{Error, Result};

const RANK_TOLERANCE: f64 = 1e-10;

fn weighted_mean(points: &[Point3], weights: &[f64], total: f64) -> Point3 {
    points
        .iter()
        .zip(weights)
        .fold(Vector3::zeros(), |acc, (p, &w)| acc + p * w)
        / total
}

/// Singular values of the weighted scatter, descending.
fn scatter_spectrum(points: &[Point3], weights: &[f64], mean: &Point3) -> [f64; 3] {
    let mut s = Matrix3::zeros();
    for (p, &w) in points.iter().zip(weights) {
        let d = p - mean;
        s += d * d.transpose() * w;
    }
    let mut ev: Vec<f64> = s.symmetric_eigenvalues().iter().map(|v| v.max(0.0)).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    [ev[0], ev[1], ev[2]]
}

/// Weighted least-squares rigid transform mapping `source` onto `target`,
/// minimizing `Σ wᵢ‖R·sᵢ + t − tᵢ‖²` over proper rotations.
///
/// Fewer than three pairs, a non-positive total weight, or a collinear point
/// set is reported as [`Error::Degenerate`].
pub fn kabsch(source: &[Point3], target: &[Point3], weights: &[f64]) -> Result<RigidTransform> {
    if source.len() != target.len() || source.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            what: "kabsch correspondences",
            expected: source.len(),
            got: target.len().min(weights.len()),
        });
    }
    if source.len() < 3 {
        return Err(Error::Degenerate(format!(
            "kabsch needs at least 3 pairs, got {}",
            source.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidArgument("kabsch weights must be finite and nonnegative".into()));
    }
    if source.iter().chain(target).any(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(Error::NonFinite("kabsch points"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("kabsch total weight is zero".into()));
    }
    let sc = weighted_mean(source, weights, total);
    let tc = weighted_mean(target, weights, total);
    for (name, pts, c) in [("source", source, &sc), ("target", target, &tc)] {
        let sv = scatter_spectrum(pts, weights, c);
        if sv[0] <= 0.0 || sv[1] <= RANK_TOLERANCE * sv[0] {
            return Err(Error::Degenerate(format!(
                "{name} points are collinear or coincident (scatter spectrum {sv:?})"
            )));
        }
    }

    let mut h = Matrix3::zeros();
    for ((s, t), &w) in source.iter().zip(target).zip(weights) {
        h += (s - sc) * (t - tc).transpose() * w;
    }
    let svd = SVD::new(h, true, true);
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested Vᵀ").transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        let smallest = svd.singular_values.imin();
        d[(smallest, smallest)] = -1.0;
    }
    let rotation = v * d * u.transpose();
    let translation = tc - rotation * sc;
    Ok(RigidTransform::new(rotation, translation))
}
