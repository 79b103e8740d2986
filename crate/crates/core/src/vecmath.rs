//! Dense vector helpers shared by the estimators and schedulers.

use crate::error::{QdError, Result};

/// Norm threshold below which a vector is treated as zero for normalization.
pub const EPS_NORM: f64 = 1e-12;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `out += scale * v`
pub fn axpy(out: &mut [f64], scale: f64, v: &[f64]) {
    debug_assert_eq!(out.len(), v.len());
    for (o, x) in out.iter_mut().zip(v) {
        *o += scale * x;
    }
}

pub fn scale(v: &mut [f64], s: f64) {
    for x in v.iter_mut() {
        *x *= s;
    }
}

pub fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na <= EPS_NORM || nb <= EPS_NORM {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// Scales `v` to unit Euclidean norm. A vector with norm at or below
/// [`EPS_NORM`] cannot be given a direction; it comes back as the zero vector
/// with the flag set so callers can skip it instead of propagating NaN.
pub fn normalize_to_unit(v: &[f64]) -> Result<(Vec<f64>, bool)> {
    if !all_finite(v) {
        return Err(QdError::invalid("normalize_to_unit: non-finite input"));
    }
    let n = norm(v);
    if n <= EPS_NORM {
        return Ok((vec![0.0; v.len()], true));
    }
    Ok((v.iter().map(|x| x / n).collect(), false))
}
