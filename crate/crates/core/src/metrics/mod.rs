//! Audit oracles, stopping rules and trace recording.
//!
//! Nothing here is charged to an algorithm's gradient count: audits keep
//! their own counter in [`Auditor`].

mod eigen;
mod stopping;
mod trace;

pub use eigen::{min_eigenvalue, min_eigenvalue_dense, min_eigenvalue_iterative, EigenEstimate, DENSE_EIGEN_MAX_DIM};
pub use stopping::{check_stopping, evaluate, Audit, StopReason, StoppingCriteria, Verdict};
pub use trace::{read_trace_csv, write_trace_csv, CsvTrace, NullTrace, TraceRecord, TraceSink, TRACE_HEADER};

use std::sync::atomic::{AtomicU64, Ordering};

use crate::problems::{full_grad, full_value, ClientMeans, FederatedProblem, FiniteSumProblem};
use crate::vector;

/// `∇f(x)`: the exact mean of all component gradients, summed in ascending
/// component order.
pub fn true_gradient<P: FiniteSumProblem + ?Sized>(problem: &P, x: &[f64]) -> Vec<f64> {
    full_grad(problem, x)
}

/// Federated `∇f(x)`: mean over clients of client means.
pub fn federated_true_gradient(problem: &FederatedProblem, x: &[f64]) -> Vec<f64> {
    problem.gradient(x)
}

/// `‖v − g‖²`. Every estimator-error figure in the crate goes through this.
pub fn discrepancy_sq(estimate: &[f64], gradient: &[f64]) -> f64 {
    vector::dist_sq(estimate, gradient)
}

/// Objective-side audit access shared by centralized and federated runs.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn gap(&self, x: &[f64]) -> Option<f64>;
    fn has_gap(&self) -> bool;
    fn supports_curvature(&self) -> bool;
    fn lambda_min(&self, x: &[f64]) -> crate::Result<f64>;
    fn accuracy(&self, _x: &[f64]) -> Option<f64> {
        None
    }
    /// Component-gradient evaluations one [`Objective::gradient`] call costs.
    fn gradient_cost(&self) -> u64;
}

/// Wraps a finite-sum problem as an [`Objective`].
pub struct Centralized<'a>(pub &'a dyn FiniteSumProblem);

impl Objective for Centralized<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        full_value(self.0, x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        true_gradient(self.0, x)
    }
    fn gap(&self, x: &[f64]) -> Option<f64> {
        self.0.optimality_gap(x)
    }
    fn has_gap(&self) -> bool {
        self.0.metadata().f_star.is_some()
    }
    fn supports_curvature(&self) -> bool {
        let d = self.0.dim();
        self.0.has_hessian() || self.0.hessian_vector(&vec![0.0; d], &vec![0.0; d]).is_some()
    }
    fn lambda_min(&self, x: &[f64]) -> crate::Result<f64> {
        min_eigenvalue(self.0, x)
    }
    fn accuracy(&self, x: &[f64]) -> Option<f64> {
        self.0.accuracy(x)
    }
    fn gradient_cost(&self) -> u64 {
        self.0.num_components() as u64
    }
}

impl Objective for FederatedProblem {
    fn dim(&self) -> usize {
        FederatedProblem::dim(self)
    }
    fn value(&self, x: &[f64]) -> f64 {
        FederatedProblem::value(self, x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        federated_true_gradient(self, x)
    }
    fn gap(&self, x: &[f64]) -> Option<f64> {
        self.optimality_gap(x)
    }
    fn has_gap(&self) -> bool {
        self.metadata().f_star.is_some()
    }
    fn supports_curvature(&self) -> bool {
        self.has_hessian()
    }
    fn lambda_min(&self, x: &[f64]) -> crate::Result<f64> {
        min_eigenvalue(&ClientMeans::new(self), x)
    }
    fn gradient_cost(&self) -> u64 {
        self.clients().iter().map(|c| c.num_components() as u64).sum()
    }
}

/// Audit-side call counter, kept apart from algorithm ledgers.
#[derive(Debug, Default)]
pub struct Auditor {
    grad_calls: AtomicU64,
}

impl Auditor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn gradient<O: Objective + ?Sized>(&self, objective: &O, x: &[f64]) -> Vec<f64> {
        self.grad_calls.fetch_add(objective.gradient_cost(), Ordering::Relaxed);
        objective.gradient(x)
    }

    pub fn grad_calls(&self) -> u64 {
        self.grad_calls.load(Ordering::Relaxed)
    }
}
