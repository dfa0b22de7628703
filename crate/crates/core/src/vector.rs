//! Dense `f64` vector kernels used by the estimators.
//!
//! Everything works on slices so state can live in flat row-major tables.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `‖a − b‖ / ‖b‖`, falling back to the absolute error when `b` is zero.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = dist_sq(a, b).sqrt();
    let base = norm(b);
    if base > 0.0 {
        diff / base
    } else {
        diff
    }
}

/// Mean of a list of equal-length vectors, summed in list order.
pub fn mean_of(rows: &[Vec<f64>], d: usize) -> Vec<f64> {
    let mut acc = vec![0.0; d];
    for r in rows {
        axpy(1.0, r, &mut acc);
    }
    if !rows.is_empty() {
        scale(1.0 / rows.len() as f64, &mut acc);
    }
    acc
}

pub fn is_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}
