use nalgebra::DMatrix;

use super::spectral::{centered_perturbations, flat, matvec, max_pairwise_gap};
use super::{check_dims, FiniteSumProblem, ProblemMetadata};
use crate::rng::{Purpose, SeedStream};
use crate::{vector, Error, Result};

/// Default spectral norm of the per-component Hessian perturbations.
pub const DEFAULT_SADDLE_SPREAD: f64 = 0.5;

/// `f_i(x) = ½ xᵀ H_i x + ¼ ‖x‖⁴` with `(1/n) Σ H_i = diag(1, …, 1, −γ)`.
///
/// The origin is a strict saddle of the mean objective; its global minimum
/// `−γ²/4` is attained at `±√γ e_d`.
#[derive(Debug, Clone)]
pub struct SaddleEnsemble {
    d: usize,
    gamma: f64,
    hessians: Vec<DMatrix<f64>>,
    flat_hessians: Vec<Vec<f64>>,
    mean_flat: Vec<f64>,
    metadata: ProblemMetadata,
}

impl SaddleEnsemble {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Escape direction `e_d`.
    pub fn escape_direction(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.d];
        e[self.d - 1] = 1.0;
        e
    }
}

pub fn make_saddle_ensemble(d: usize, n: usize, gamma: f64, seed: u64) -> Result<SaddleEnsemble> {
    make_saddle_ensemble_with(d, n, gamma, DEFAULT_SADDLE_SPREAD, seed)
}

/// As [`make_saddle_ensemble`] with an explicit perturbation size `spread`
/// (`‖H_i − H̄‖ ≤ spread`).
pub fn make_saddle_ensemble_with(d: usize, n: usize, gamma: f64, spread: f64, seed: u64) -> Result<SaddleEnsemble> {
    check_dims(d, n)?;
    if !(gamma > 0.0) {
        return Err(Error::invalid("gamma must be positive"));
    }
    if spread < 0.0 {
        return Err(Error::invalid("spread must be non-negative"));
    }
    let mut mean = DMatrix::identity(d, d);
    mean[(d - 1, d - 1)] = -gamma;
    let mut rng = SeedStream::new(seed).rng(Purpose::Generator, 1);
    let hessians: Vec<DMatrix<f64>> = if spread == 0.0 {
        vec![mean.clone(); n]
    } else {
        centered_perturbations(&mut rng, d, n)
            .into_iter()
            .map(|s| &mean + s * spread)
            .collect()
    };
    let zeta = max_pairwise_gap(&hessians);
    let metadata = ProblemMetadata {
        zeta: Some(zeta),
        f_star: Some(-gamma * gamma / 4.0),
        ..Default::default()
    };
    Ok(SaddleEnsemble {
        d,
        gamma,
        flat_hessians: hessians.iter().map(flat).collect(),
        hessians,
        mean_flat: flat(&mean),
        metadata,
    })
}

impl FiniteSumProblem for SaddleEnsemble {
    fn num_components(&self) -> usize {
        self.hessians.len()
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn component_grad_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        matvec(&self.flat_hessians[i], x, out);
        let r2 = vector::norm_sq(x);
        vector::axpy(r2, x, out);
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        let mut hx = vec![0.0; self.d];
        matvec(&self.flat_hessians[i], x, &mut hx);
        let r2 = vector::norm_sq(x);
        0.5 * vector::dot(x, &hx) + 0.25 * r2 * r2
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn component_hessian(&self, i: usize, x: &[f64]) -> Option<DMatrix<f64>> {
        let r2 = vector::norm_sq(x);
        let xv = nalgebra::DVector::from_column_slice(x);
        Some(&self.hessians[i] + DMatrix::identity(self.d, self.d) * r2 + (&xv * xv.transpose()) * 2.0)
    }

    fn hessian_vector(&self, x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let mut out = vec![0.0; self.d];
        matvec(&self.mean_flat, v, &mut out);
        vector::axpy(vector::norm_sq(x), v, &mut out);
        vector::axpy(2.0 * vector::dot(x, v), x, &mut out);
        Some(out)
    }

    fn metadata(&self) -> &ProblemMetadata {
        &self.metadata
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{full_grad, full_hessian, full_value};

    #[test]
    fn origin_is_stationary_for_every_component() {
        let p = make_saddle_ensemble(6, 9, 0.5, 2).unwrap();
        let zero = vec![0.0; 6];
        for i in 0..9 {
            assert!(p.component_grad(i, &zero).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn mean_hessian_at_origin_has_min_eigenvalue_minus_gamma() {
        let p = make_saddle_ensemble(5, 7, 0.3, 4).unwrap();
        let h = full_hessian(&p, &[0.0; 5]).unwrap();
        let lo = h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((lo + 0.3).abs() < 1e-12);
    }

    #[test]
    fn escape_profile_matches_calculus() {
        let gamma = 0.5;
        let p = make_saddle_ensemble(4, 3, gamma, 9).unwrap();
        let e = p.escape_direction();
        for &t in &[0.1, 0.4, gamma.sqrt(), 1.3] {
            let x: Vec<f64> = e.iter().map(|v| v * t).collect();
            let expect = -gamma * t * t / 2.0 + t.powi(4) / 4.0;
            assert!((full_value(&p, &x) - expect).abs() < 1e-12);
        }
        // Stationary at t = √γ with value −γ²/4.
        let xs: Vec<f64> = e.iter().map(|v| v * gamma.sqrt()).collect();
        assert!(vector::norm(&full_grad(&p, &xs)) < 1e-12);
        assert!((full_value(&p, &xs) + gamma * gamma / 4.0).abs() < 1e-12);
    }

    #[test]
    fn hvp_matches_dense_hessian() {
        let p = make_saddle_ensemble(4, 5, 0.7, 1).unwrap();
        let x = [0.3, -0.2, 0.5, 0.1];
        let v = [1.0, 2.0, -1.0, 0.5];
        let h = full_hessian(&p, &x).unwrap();
        let dense = h * nalgebra::DVector::from_column_slice(&v);
        let hv = p.hessian_vector(&x, &v).unwrap();
        assert!(vector::rel_err(&hv, dense.as_slice()) < 1e-12);
    }
}
