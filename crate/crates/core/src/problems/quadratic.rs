use nalgebra::{DMatrix, DVector};

use super::spectral::{
    centered_perturbations, flat, matvec, max_pairwise_gap, random_orthogonal, sym_extremes, sym_norm,
};
use super::{check_dims, gaussian_vec, FiniteSumProblem, ProblemMetadata};
use crate::rng::{Purpose, SeedStream};
use crate::{vector, Error, Result};

/// `f(x) − f* = ½ (x − x*)ᵀ Ā (x − x*)` for a quadratic with PD mean Hessian.
#[derive(Debug, Clone)]
pub struct QuadraticGap {
    hessian: Vec<f64>,
    minimizer: Vec<f64>,
}

impl QuadraticGap {
    pub fn new(hessian: &DMatrix<f64>, minimizer: Vec<f64>) -> Self {
        Self { hessian: flat(hessian), minimizer }
    }

    pub fn minimizer(&self) -> &[f64] {
        &self.minimizer
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let e = vector::sub(x, &self.minimizer);
        let mut he = vec![0.0; e.len()];
        matvec(&self.hessian, &e, &mut he);
        0.5 * vector::dot(&e, &he)
    }
}

/// `f_i(x) = ½ xᵀ A_i x + b_iᵀ x` with symmetric `A_i`.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    d: usize,
    hessians: Vec<DMatrix<f64>>,
    flat_hessians: Vec<Vec<f64>>,
    linear: Vec<Vec<f64>>,
    mean_hessian: DMatrix<f64>,
    mean_linear: Vec<f64>,
    gap: Option<QuadraticGap>,
    metadata: ProblemMetadata,
}

impl QuadraticProblem {
    /// Builds the problem and measures its constants from the matrices.
    pub fn from_parts(hessians: Vec<DMatrix<f64>>, linear: Vec<Vec<f64>>) -> Result<Self> {
        let n = hessians.len();
        if n == 0 || linear.len() != n {
            return Err(Error::invalid("need one linear term per Hessian and at least one component"));
        }
        let d = hessians[0].nrows();
        check_dims(d, n)?;
        for (h, b) in hessians.iter().zip(&linear) {
            if h.nrows() != d || h.ncols() != d || b.len() != d {
                return Err(Error::invalid("component shapes disagree"));
            }
        }
        let mut mean_hessian = DMatrix::zeros(d, d);
        for h in &hessians {
            mean_hessian += h;
        }
        mean_hessian /= n as f64;
        let mean_linear = vector::mean_of(&linear, d);

        let (lo, hi) = sym_extremes(&mean_hessian);
        let comp_l = hessians.iter().map(sym_norm).fold(0.0_f64, f64::max);
        let zeta = max_pairwise_gap(&hessians);

        let (gap, f_star, mu) = if lo > 0.0 {
            let rhs = -DVector::from_column_slice(&mean_linear);
            let chol = mean_hessian
                .clone()
                .cholesky()
                .ok_or_else(|| Error::invalid("mean Hessian is not positive definite"))?;
            let xs = chol.solve(&rhs);
            let f_star = 0.5 * vector::dot(&mean_linear, xs.as_slice());
            let gap = QuadraticGap::new(&mean_hessian, xs.as_slice().to_vec());
            (Some(gap), Some(f_star), Some(lo))
        } else {
            (None, None, None)
        };

        let metadata = ProblemMetadata {
            lipschitz: Some(comp_l.max(hi)),
            mu,
            zeta: Some(zeta),
            rho: Some(0.0),
            f_star,
            ..Default::default()
        };
        Ok(Self {
            d,
            flat_hessians: hessians.iter().map(flat).collect(),
            hessians,
            linear,
            mean_hessian,
            mean_linear,
            gap,
            metadata,
        })
    }

    pub fn mean_hessian(&self) -> &DMatrix<f64> {
        &self.mean_hessian
    }

    pub fn mean_linear(&self) -> &[f64] {
        &self.mean_linear
    }

    pub fn hessian(&self, i: usize) -> &DMatrix<f64> {
        &self.hessians[i]
    }

    pub fn linear(&self, i: usize) -> &[f64] {
        &self.linear[i]
    }

    pub fn minimizer(&self) -> Option<&[f64]> {
        self.gap.as_ref().map(|g| g.minimizer())
    }

    pub fn gap_oracle(&self) -> Option<&QuadraticGap> {
        self.gap.as_ref()
    }
}

impl FiniteSumProblem for QuadraticProblem {
    fn num_components(&self) -> usize {
        self.hessians.len()
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn component_grad_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        matvec(&self.flat_hessians[i], x, out);
        vector::axpy(1.0, &self.linear[i], out);
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.d];
        matvec(&self.flat_hessians[i], x, &mut ax);
        0.5 * vector::dot(x, &ax) + vector::dot(&self.linear[i], x)
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn component_hessian(&self, i: usize, _x: &[f64]) -> Option<DMatrix<f64>> {
        Some(self.hessians[i].clone())
    }

    fn hessian_vector(&self, _x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let out = &self.mean_hessian * DVector::from_column_slice(v);
        Some(out.as_slice().to_vec())
    }

    fn metadata(&self) -> &ProblemMetadata {
        &self.metadata
    }

    fn optimality_gap(&self, x: &[f64]) -> Option<f64> {
        self.gap.as_ref().map(|g| g.eval(x))
    }
}

/// Mean Hessian with eigenvalues evenly spaced in `[mu, l]`, rotated by a
/// random orthogonal matrix. Equal endpoints give exactly `mu · I`.
pub(crate) fn spectrum_matrix<R: rand::Rng>(rng: &mut R, d: usize, mu: f64, l: f64) -> DMatrix<f64> {
    if mu == l {
        return DMatrix::identity(d, d) * mu;
    }
    let eig: Vec<f64> = (0..d)
        .map(|k| if d == 1 { mu } else { mu + (l - mu) * k as f64 / (d - 1) as f64 })
        .collect();
    let q = random_orthogonal(rng, d);
    let m = &q * DMatrix::from_diagonal(&DVector::from_vec(eig)) * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// Quadratic ensemble `A_i = Ā + (ζ/2) S_i`, `Σ S_i = 0`, `‖S_i‖ ≤ 1`, with
/// the spectrum of `Ā` spread over `[mu, l]`. Reported metadata is measured.
pub fn make_quadratic_pl(d: usize, mu: f64, l: f64, n: usize, zeta: f64, seed: u64) -> Result<QuadraticProblem> {
    check_dims(d, n)?;
    if !(mu > 0.0 && mu <= l) {
        return Err(Error::invalid(format!("need 0 < mu <= L, got mu={mu}, L={l}")));
    }
    if zeta < 0.0 {
        return Err(Error::invalid("zeta must be non-negative"));
    }
    let mut rng = SeedStream::new(seed).rng(Purpose::Generator, 0);
    let mean = spectrum_matrix(&mut rng, d, mu, l);
    let hessians = if zeta == 0.0 {
        vec![mean; n]
    } else {
        centered_perturbations(&mut rng, d, n)
            .into_iter()
            .map(|s| &mean + s * (zeta / 2.0))
            .collect()
    };
    let linear = (0..n).map(|_| gaussian_vec(&mut rng, d)).collect();
    QuadraticProblem::from_parts(hessians, linear)
}
