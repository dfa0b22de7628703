//! Finite-sum objectives `f(x) = (1/n) Σ_i f_i(x)` and their generators.

mod dataset;
mod descriptor;
mod federated;
mod logistic;
mod quadratic;
mod saddle;
mod spectral;

pub use dataset::{
    load_libsvm, read_libsvm, synthetic_classification, write_libsvm, CsrMatrix, Features,
    LabeledDataset, Row, SyntheticClassSpec,
};
pub use descriptor::{BuiltProblem, DatasetSource, ProblemDescriptor};
pub use federated::{
    federated_logistic, make_federated_quadratic, partition_clients, ClientMeans, ClientPartition,
    FederatedProblem, FederatedQuadraticSpec, Flattened, PartitionSpec,
};
pub use logistic::{class_groups, make_logistic, Grouping, LogisticProblem};
pub use quadratic::{make_quadratic_pl, QuadraticGap, QuadraticProblem};
pub use saddle::{make_saddle_ensemble, make_saddle_ensemble_with, SaddleEnsemble};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::par;
use crate::vector;

/// Known constants of a problem. Generators fill these from the constructed
/// objects, never from the requested targets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProblemMetadata {
    /// Gradient-Lipschitz constant of every component.
    pub lipschitz: Option<f64>,
    /// PL constant of the mean objective.
    pub mu: Option<f64>,
    /// Hessian heterogeneity: `‖∇²f_i − ∇²f_j‖ ≤ zeta`.
    pub zeta: Option<f64>,
    /// Hessian-Lipschitz constant.
    pub rho: Option<f64>,
    pub f_star: Option<f64>,
    pub sigma_c: Option<f64>,
    pub g_c: Option<f64>,
    pub sigma: Option<f64>,
    pub g: Option<f64>,
}

impl ProblemMetadata {
    pub fn validate(&self) -> crate::Result<()> {
        if let Some(mu) = self.mu {
            if mu <= 0.0 {
                return Err(crate::Error::invalid(format!("mu must be positive, got {mu}")));
            }
            if let Some(l) = self.lipschitz {
                if mu > l * (1.0 + 1e-12) {
                    return Err(crate::Error::invalid(format!("mu {mu} exceeds L {l}")));
                }
            }
        }
        if let (Some(z), Some(l)) = (self.zeta, self.lipschitz) {
            if z < 0.0 || z > 2.0 * l * (1.0 + 1e-12) {
                return Err(crate::Error::invalid(format!("zeta {z} outside [0, 2L]")));
            }
        }
        Ok(())
    }
}

/// Oracle bundle for a finite-sum objective.
///
/// Implementations are read-only after construction and must be safe to
/// evaluate from several threads. `component_grad_into` must be
/// deterministic: identical `(i, x)` gives bit-identical output.
pub trait FiniteSumProblem: Send + Sync {
    fn num_components(&self) -> usize;

    fn dim(&self) -> usize;

    /// Writes `∇f_i(x)` into `out` (overwriting it).
    fn component_grad_into(&self, i: usize, x: &[f64], out: &mut [f64]);

    fn component_grad(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.component_grad_into(i, x, &mut out);
        out
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64;

    fn has_hessian(&self) -> bool {
        false
    }

    fn component_hessian(&self, _i: usize, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    /// `∇²f(x) v` for the mean objective. The default sums dense component
    /// Hessians; generators with structure override it.
    fn hessian_vector(&self, x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        if !self.has_hessian() {
            return None;
        }
        let n = self.num_components();
        let vv = nalgebra::DVector::from_column_slice(v);
        let mut acc = vec![0.0; self.dim()];
        for i in 0..n {
            let h = self.component_hessian(i, x)?;
            vector::axpy(1.0, (h * &vv).as_slice(), &mut acc);
        }
        vector::scale(1.0 / n as f64, &mut acc);
        Some(acc)
    }

    fn metadata(&self) -> &ProblemMetadata;

    /// `f(x) − f*`, when `f*` is known. Quadratic generators override this
    /// with a cancellation-free closed form.
    fn optimality_gap(&self, x: &[f64]) -> Option<f64> {
        self.metadata().f_star.map(|fs| full_value(self, x) - fs)
    }

    /// 0/1 training accuracy for classification objectives.
    fn accuracy(&self, _x: &[f64]) -> Option<f64> {
        None
    }
}

/// `f(x)`, summed in ascending component order.
pub fn full_value<P: FiniteSumProblem + ?Sized>(problem: &P, x: &[f64]) -> f64 {
    let n = problem.num_components();
    let vals = par::map_range(n, |i| problem.component_value(i, x));
    vals.iter().sum::<f64>() / n as f64
}

/// `∇f(x)`, summed in ascending component order.
pub fn full_grad<P: FiniteSumProblem + ?Sized>(problem: &P, x: &[f64]) -> Vec<f64> {
    let n = problem.num_components();
    let grads = par::map_range(n, |i| problem.component_grad(i, x));
    vector::mean_of(&grads, problem.dim())
}

/// Sequential `∇f(x)`; bit-identical to [`full_grad`].
pub fn full_grad_seq<P: FiniteSumProblem + ?Sized>(problem: &P, x: &[f64]) -> Vec<f64> {
    let n = problem.num_components();
    let grads = par::map_range_seq(n, |i| problem.component_grad(i, x));
    vector::mean_of(&grads, problem.dim())
}

/// Mean of the dense component Hessians at `x`.
pub fn full_hessian<P: FiniteSumProblem + ?Sized>(problem: &P, x: &[f64]) -> Option<DMatrix<f64>> {
    if !problem.has_hessian() {
        return None;
    }
    let d = problem.dim();
    let n = problem.num_components();
    let mut acc = DMatrix::zeros(d, d);
    for i in 0..n {
        acc += problem.component_hessian(i, x)?;
    }
    Some(acc / n as f64)
}

impl<T: FiniteSumProblem + ?Sized> FiniteSumProblem for std::sync::Arc<T> {
    fn num_components(&self) -> usize {
        (**self).num_components()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn component_grad_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        (**self).component_grad_into(i, x, out)
    }
    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        (**self).component_value(i, x)
    }
    fn has_hessian(&self) -> bool {
        (**self).has_hessian()
    }
    fn component_hessian(&self, i: usize, x: &[f64]) -> Option<DMatrix<f64>> {
        (**self).component_hessian(i, x)
    }
    fn hessian_vector(&self, x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        (**self).hessian_vector(x, v)
    }
    fn metadata(&self) -> &ProblemMetadata {
        (**self).metadata()
    }
    fn optimality_gap(&self, x: &[f64]) -> Option<f64> {
        (**self).optimality_gap(x)
    }
    fn accuracy(&self, x: &[f64]) -> Option<f64> {
        (**self).accuracy(x)
    }
}

/// Standard-normal vector of length `d`.
pub(crate) fn gaussian_vec<R: rand::Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

pub(crate) fn check_dims(d: usize, n: usize) -> crate::Result<()> {
    if d == 0 {
        return Err(crate::Error::invalid("dimension d must be positive"));
    }
    if n == 0 {
        return Err(crate::Error::invalid("component count n must be positive"));
    }
    Ok(())
}
