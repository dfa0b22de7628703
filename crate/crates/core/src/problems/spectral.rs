//! Small dense spectral helpers for generators.

use nalgebra::DMatrix;
use rand::Rng;

use super::gaussian_vec;

/// Haar-ish random orthogonal matrix from the QR factor of a Gaussian matrix.
pub(crate) fn random_orthogonal<R: Rng>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_column_slice(d, d, &gaussian_vec(rng, d * d));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

pub(crate) fn random_symmetric<R: Rng>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_column_slice(d, d, &gaussian_vec(rng, d * d));
    (&g + g.transpose()) * 0.5
}

/// Spectral norm of a symmetric matrix.
pub(crate) fn sym_norm(m: &DMatrix<f64>) -> f64 {
    if m.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub(crate) fn sym_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let ev = m.clone().symmetric_eigenvalues();
    let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// `count` symmetric matrices with zero sum and largest spectral norm 1
/// (all zero when `count == 1`).
pub(crate) fn centered_perturbations<R: Rng>(rng: &mut R, d: usize, count: usize) -> Vec<DMatrix<f64>> {
    let mut mats: Vec<DMatrix<f64>> = (0..count).map(|_| random_symmetric(rng, d)).collect();
    let mut mean = DMatrix::zeros(d, d);
    for m in &mats {
        mean += m;
    }
    mean /= count as f64;
    for m in mats.iter_mut() {
        *m -= &mean;
    }
    let largest = mats.iter().map(sym_norm).fold(0.0_f64, f64::max);
    if largest > 0.0 {
        for m in mats.iter_mut() {
            *m /= largest;
        }
    }
    mats
}

/// `max_{i<j} ‖m_i − m_j‖₂`.
pub(crate) fn max_pairwise_gap(mats: &[DMatrix<f64>]) -> f64 {
    let pairs: Vec<(usize, usize)> = (0..mats.len())
        .flat_map(|i| (i + 1..mats.len()).map(move |j| (i, j)))
        .collect();
    crate::par::map_indexed(&pairs, |&(i, j)| sym_norm(&(&mats[i] - &mats[j])))
        .into_iter()
        .fold(0.0_f64, f64::max)
}

/// Row-major storage of a symmetric matrix, used by the gradient kernels.
pub(crate) fn flat(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * d);
    for r in 0..d {
        for c in 0..d {
            out.push(m[(r, c)]);
        }
    }
    out
}

/// `out = M x` for a row-major `d × d` matrix.
#[inline]
pub(crate) fn matvec(m: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &m[r * d..(r + 1) * d];
        *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}
