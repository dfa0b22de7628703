//! Smallest Hessian eigenvalue.
//!
//! Dense symmetric eigensolve up to [`DENSE_EIGEN_MAX_DIM`]; beyond that,
//! power iteration on `σI − ∇²f(x)` driven by Hessian-vector products. The
//! iterative estimate `θ` carries its residual `‖Hv − θv‖`, which bounds the
//! distance from `θ` to some eigenvalue of the symmetric Hessian.

use rand_distr::{Distribution, StandardNormal};

use crate::problems::{full_hessian, FiniteSumProblem};
use crate::rng::{Purpose, SeedStream};
use crate::{vector, Error, Result};

pub const DENSE_EIGEN_MAX_DIM: usize = 512;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenEstimate {
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
}

pub fn min_eigenvalue<P: FiniteSumProblem + ?Sized>(problem: &P, x: &[f64]) -> Result<f64> {
    if problem.has_hessian() && problem.dim() <= DENSE_EIGEN_MAX_DIM {
        return min_eigenvalue_dense(problem, x);
    }
    min_eigenvalue_iterative(problem, x).map(|e| e.value)
}

pub fn min_eigenvalue_dense<P: FiniteSumProblem + ?Sized>(problem: &P, x: &[f64]) -> Result<f64> {
    let h = full_hessian(problem, x).ok_or_else(|| Error::Unsupported("problem has no Hessian oracle".into()))?;
    let h = (&h + h.transpose()) * 0.5;
    Ok(h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min))
}

pub fn min_eigenvalue_iterative<P: FiniteSumProblem + ?Sized>(problem: &P, x: &[f64]) -> Result<EigenEstimate> {
    let d = problem.dim();
    let hvp = |v: &[f64]| {
        problem
            .hessian_vector(x, v)
            .ok_or_else(|| Error::Unsupported("no Hessian or Hessian-vector oracle".into()))
    };
    let mut rng = SeedStream::new(0x1ce).rng(Purpose::Audit, d as u64);
    let start: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();

    let sigma = match problem.metadata().lipschitz {
        Some(l) => l,
        None => {
            // |λ|max via plain power iteration, padded.
            let mut v = start.clone();
            let mut est = 0.0;
            for _ in 0..200 {
                let nv = vector::norm(&v);
                vector::scale(1.0 / nv, &mut v);
                let hv = hvp(&v)?;
                est = vector::norm(&hv);
                if est == 0.0 {
                    break;
                }
                v = hv;
            }
            1.1 * est + 1e-12
        }
    };

    let mut v = start;
    let nv = vector::norm(&v);
    vector::scale(1.0 / nv, &mut v);
    let mut theta = 0.0;
    let mut residual = f64::INFINITY;
    for it in 1..=POWER_MAX_ITERS {
        let hv = hvp(&v)?;
        theta = vector::dot(&v, &hv);
        let r: Vec<f64> = hv.iter().zip(&v).map(|(h, vi)| h - theta * vi).collect();
        residual = vector::norm(&r);
        if residual <= POWER_TOL * sigma.abs().max(1.0) {
            return Ok(EigenEstimate { value: theta, residual, iterations: it });
        }
        // w = (σI − H) v
        let mut w: Vec<f64> = v.iter().zip(&hv).map(|(vi, h)| sigma * vi - h).collect();
        let nw = vector::norm(&w);
        if nw == 0.0 {
            return Ok(EigenEstimate { value: theta, residual, iterations: it });
        }
        vector::scale(1.0 / nw, &mut w);
        v = w;
    }
    Ok(EigenEstimate { value: theta, residual, iterations: POWER_MAX_ITERS })
}
