//! Variance-reduced finite-sum optimization.
//!
//! The crate is organised around a small number of pieces:
//!
//! * [`problems`]: the [`FiniteSumProblem`] oracle abstraction, synthetic
//!   generators with exactly computable constants, LibSVM ingestion and the
//!   heterogeneous client partitioner.
//! * [`estimator`]: the single-loop gradient table (naive and `O(bd)`
//!   incremental variants) and the perturbation-ball sampler.
//! * [`optimizers`]: drivers for the single-loop method and the SGD, SAGA,
//!   SARAH and perturbed-SARAH baselines.
//! * [`fledge`]: a deterministic single-process simulator of the federated
//!   variant with exact communication accounting.
//! * [`metrics`]: audit oracles, stopping rules and trace recording.
//!
//! Inner loops over components (minibatch gradients, full-gradient audits)
//! run on rayon when the `parallel` feature is enabled and sequentially
//! otherwise; reductions always happen in ascending index order, so results
//! are bit-identical between the two builds.

pub mod error;
pub mod estimator;
pub mod fledge;
pub mod metrics;
pub mod optimizers;
pub mod par;
pub mod problems;
pub mod rng;
pub mod vector;

pub use error::{Error, Result};
pub use problems::{FiniteSumProblem, ProblemMetadata};
