//! Closed-form least-squares similarity between corresponding point sets.

use nalgebra::{Matrix3, Point3, Vector3};

use super::SimilarityTransform;
use crate::error::{Error, Result};

/// Relative singular-value threshold below which the cross-covariance is
/// considered rank deficient.
const RANK_TOL: f64 = 1e-12;

/// Least-squares `(s, R, t)` minimizing `Σ ‖s·R·pᵢ + t − qᵢ‖²`. With
/// `with_scale = false` the scale is fixed to 1.
pub fn umeyama(
    source: &[Point3<f64>],
    target: &[Point3<f64>],
    with_scale: bool,
) -> Result<SimilarityTransform> {
    if source.len() != target.len() {
        return Err(Error::invalid(format!(
            "correspondence length mismatch: {} vs {}",
            source.len(),
            target.len()
        )));
    }
    let n = source.len();
    if n < 3 {
        return Err(Error::degenerate(format!(
            "need at least 3 correspondences, got {n}"
        )));
    }
    let inv_n = 1.0 / n as f64;
    let mu_s = source.iter().fold(Vector3::zeros(), |a, p| a + p.coords) * inv_n;
    let mu_t = target.iter().fold(Vector3::zeros(), |a, p| a + p.coords) * inv_n;

    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (p, q) in source.iter().zip(target) {
        let ds = p.coords - mu_s;
        let dt = q.coords - mu_t;
        cov += dt * ds.transpose();
        var_s += ds.norm_squared();
    }
    cov *= inv_n;
    var_s *= inv_n;

    let svd = cov.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut sv = svd.singular_values;
    // nalgebra does not guarantee ordering
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let (s0, s1) = (sv[order[0]], sv[order[1]]);
    if s0 <= 0.0 || s1 <= RANK_TOL * s0 || var_s <= 0.0 {
        return Err(Error::degenerate(
            "cross-covariance has rank < 2 (points coincident or collinear)",
        ));
    }

    let mut sign = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        // flip the axis of the smallest singular value
        sign[(order[2], order[2])] = -1.0;
    }
    let rotation = u * sign * v_t;
    let scale = if with_scale {
        for i in 0..3 {
            sv[i] *= sign[(i, i)];
        }
        sv.sum() / var_s
    } else {
        1.0
    };
    let translation = mu_t - scale * (rotation * mu_s);
    SimilarityTransform::new(scale, rotation, translation)
}

/// `Σ ‖T(pᵢ) − qᵢ‖²`.
pub fn residual_sum_sq(
    t: &SimilarityTransform,
    source: &[Point3<f64>],
    target: &[Point3<f64>],
) -> f64 {
    source
        .iter()
        .zip(target)
        .map(|(p, q)| (t.apply(p) - q).norm_squared())
        .sum()
}
