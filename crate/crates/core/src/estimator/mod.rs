//! The single-loop SARAH gradient table.
//!
//! Every component keeps a vector `y_i`; the estimator is their mean. Each
//! step moves the iterate along the estimator (plus ball noise), resets the
//! sampled rows to fresh gradients, and shifts every other row by the
//! minibatch correction `δ = (1/b) Σ_{j∈I} (∇f_j(x^t) − ∇f_j(x^{t−1}))`.
//!
//! [`Mode::Naive`] stores the `n × d` table and recomputes the mean.
//! [`Mode::Efficient`] never touches unsampled rows: it keeps a running sum
//! of corrections `v`, and per row a snapshot `v_i` of that sum and the last
//! fresh gradient `w_i`, so that `y_i = w_i + (v − v_i)`. The mean is then
//! updated in `O(bd)`:
//!
//! ```text
//! ȳ^t = ȳ^{t−1} + (1/b) Σ_{i∈I} (∇f_i(x^t) − ((n−b)/n) ∇f_i(x^{t−1}))
//!               − (1/n) Σ_{i∈I} (w_i + v^{t−1} − v_i)
//! ```

mod sampling;

pub use sampling::{sample_ball, IndexPool, MinibatchSample};

use serde::{Deserialize, Serialize};

use crate::metrics::{discrepancy_sq, true_gradient};
use crate::problems::FiniteSumProblem;
use crate::rng::{Purpose, SeedStream};
use crate::{par, vector, Error, Result};

/// Table initialisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitOption {
    /// Every row set to one minibatch mean at `x⁰`.
    #[serde(rename = "I")]
    Minibatch,
    /// Every row set to its own gradient at `x⁰`.
    #[serde(rename = "II")]
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Naive,
    Efficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SledgeConfig {
    pub eta: f64,
    pub b: usize,
    /// Step budget `T`.
    pub steps: usize,
    /// Perturbation radius.
    pub r: f64,
    pub option: InitOption,
    pub seed: u64,
}

impl SledgeConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.b == 0 || self.b > n {
            return Err(Error::invalid(format!("b must lie in [1, {n}], got {}", self.b)));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::invalid(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.r >= 0.0) {
            return Err(Error::invalid(format!("r must be non-negative, got {}", self.r)));
        }
        Ok(())
    }
}

/// Audit record of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReceipt {
    pub step: usize,
    pub noise_norm: f64,
    pub indices: Vec<usize>,
    pub grad_calls: u64,
}

impl StepReceipt {
    pub const CSV_HEADER: &'static str = "step,noise_norm,indices,grad_calls";

    /// One CSV row; indices are `;`-separated.
    pub fn csv_row(&self) -> String {
        let idx: Vec<String> = self.indices.iter().map(|i| i.to_string()).collect();
        format!("{},{},{},{}", self.step, self.noise_norm, idx.join(";"), self.grad_calls)
    }
}

#[derive(Debug, Clone)]
enum Table {
    Naive {
        rows: Vec<f64>,
    },
    Efficient {
        running: Vec<f64>,
        snap_v: Vec<f64>,
        snap_w: Vec<f64>,
    },
}

/// Gradient table plus iterate. After step `t`, [`EstimatorState::iterate`]
/// is `x^t` and [`EstimatorState::aggregate`] is `(1/n) Σ y_i^t`.
#[derive(Debug, Clone)]
pub struct EstimatorState {
    n: usize,
    d: usize,
    table: Table,
    aggregate: Vec<f64>,
    iterate: Vec<f64>,
    step: usize,
    grad_calls: u64,
    row_writes: u64,
    last_row_writes: u64,
    pool: IndexPool,
    stream: SeedStream,
}

impl EstimatorState {
    pub fn mode(&self) -> Mode {
        match self.table {
            Table::Naive { .. } => Mode::Naive,
            Table::Efficient { .. } => Mode::Efficient,
        }
    }

    pub fn aggregate(&self) -> &[f64] {
        &self.aggregate
    }

    pub fn iterate(&self) -> &[f64] {
        &self.iterate
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn grad_calls(&self) -> u64 {
        self.grad_calls
    }

    /// Table rows written so far (instrumentation).
    pub fn row_writes(&self) -> u64 {
        self.row_writes
    }

    /// Rows written by the most recent step.
    pub fn last_row_writes(&self) -> u64 {
        self.last_row_writes
    }

    pub fn num_components(&self) -> usize {
        self.n
    }

    /// `y_i` at the current step; `O(d)` in both modes.
    pub fn row(&self, i: usize) -> Vec<f64> {
        let d = self.d;
        match &self.table {
            Table::Naive { rows } => rows[i * d..(i + 1) * d].to_vec(),
            Table::Efficient { running, snap_v, snap_w } => (0..d)
                .map(|k| snap_w[i * d + k] + (running[k] - snap_v[i * d + k]))
                .collect(),
        }
    }

    /// Mean of all materialised rows, summed in ascending order.
    pub fn materialized_mean(&self) -> Vec<f64> {
        let rows: Vec<Vec<f64>> = (0..self.n).map(|i| self.row(i)).collect();
        vector::mean_of(&rows, self.d)
    }
}

fn mean_rows(rows: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut acc = vec![0.0; d];
    for i in 0..n {
        vector::axpy(1.0, &rows[i * d..(i + 1) * d], &mut acc);
    }
    vector::scale(1.0 / n as f64, &mut acc);
    acc
}

/// Sets up the gradient table at `x0`.
pub fn init_estimator<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    x0: &[f64],
    config: &SledgeConfig,
    mode: Mode,
) -> Result<EstimatorState> {
    let (n, d) = (problem.num_components(), problem.dim());
    if x0.len() != d {
        return Err(Error::invalid(format!("x0 has length {}, problem dimension is {d}", x0.len())));
    }
    config.validate(n)?;
    let stream = SeedStream::new(config.seed);
    let mut pool = IndexPool::new(n);

    let (rows, grad_calls) = match config.option {
        InitOption::Full => {
            let grads = par::map_range(n, |i| problem.component_grad(i, x0));
            (grads.concat(), n as u64)
        }
        InitOption::Minibatch => {
            let batch = pool.sample(config.b, &mut stream.rng(Purpose::Init, 0));
            let grads = par::map_indexed(&batch.indices, |&j| problem.component_grad(j, x0));
            let mean = vector::mean_of(&grads, d);
            (mean.repeat(n), config.b as u64)
        }
    };
    let aggregate = mean_rows(&rows, n, d);
    let table = match mode {
        Mode::Naive => Table::Naive { rows },
        Mode::Efficient => Table::Efficient { running: vec![0.0; d], snap_v: vec![0.0; n * d], snap_w: rows },
    };
    Ok(EstimatorState {
        n,
        d,
        table,
        aggregate,
        iterate: x0.to_vec(),
        step: 0,
        grad_calls,
        row_writes: n as u64,
        last_row_writes: n as u64,
        pool,
        stream,
    })
}

/// One step with the minibatch and noise drawn from the configured streams.
pub fn sledge_step<P: FiniteSumProblem + ?Sized>(
    state: &mut EstimatorState,
    problem: &P,
    config: &SledgeConfig,
) -> Result<StepReceipt> {
    if state.step >= config.steps {
        return Err(Error::BudgetExhausted { budget: config.steps });
    }
    let t = state.step as u64 + 1;
    let noise = sample_ball(state.d, config.r, &mut state.stream.rng(Purpose::Noise, t));
    let batch = state.pool.sample(config.b, &mut state.stream.rng(Purpose::Minibatch, t));
    apply_step(state, problem, config.eta, &batch, &noise)
}

/// One step with an explicit minibatch and noise vector.
pub fn apply_step<P: FiniteSumProblem + ?Sized>(
    state: &mut EstimatorState,
    problem: &P,
    eta: f64,
    batch: &MinibatchSample,
    noise: &[f64],
) -> Result<StepReceipt> {
    let (n, d) = (state.n, state.d);
    let b = batch.len();
    if noise.len() != d {
        return Err(Error::invalid("noise dimension mismatch"));
    }

    // x^t = x^{t-1} − η ȳ^{t-1} + ξ^t
    let prev = std::mem::take(&mut state.iterate);
    let mut next = prev.clone();
    vector::axpy(-eta, &state.aggregate, &mut next);
    vector::axpy(1.0, noise, &mut next);
    state.step += 1;
    if !vector::is_finite(&next) {
        state.iterate = next;
        return Err(Error::Divergence { step: state.step, inner: None });
    }

    let pairs = par::map_indexed(&batch.indices, |&j| (problem.component_grad(j, &next), problem.component_grad(j, &prev)));
    state.grad_calls += 2 * b as u64;

    let mut delta = vec![0.0; d];
    for (new, old) in &pairs {
        for k in 0..d {
            delta[k] += new[k] - old[k];
        }
    }
    vector::scale(1.0 / b as f64, &mut delta);

    let writes = match &mut state.table {
        Table::Naive { rows } => {
            let mut cursor = 0;
            for i in 0..n {
                let row = &mut rows[i * d..(i + 1) * d];
                if cursor < b && batch.indices[cursor] == i {
                    row.copy_from_slice(&pairs[cursor].0);
                    cursor += 1;
                } else {
                    vector::axpy(1.0, &delta, row);
                }
            }
            state.aggregate = mean_rows(rows, n, d);
            n as u64
        }
        Table::Efficient { running, snap_v, snap_w } => {
            let keep = (n - b) as f64 / n as f64;
            let mut fresh = vec![0.0; d];
            for (new, old) in &pairs {
                for k in 0..d {
                    fresh[k] += new[k] - keep * old[k];
                }
            }
            let mut stale = vec![0.0; d];
            for &i in &batch.indices {
                for k in 0..d {
                    stale[k] += snap_w[i * d + k] + running[k] - snap_v[i * d + k];
                }
            }
            for k in 0..d {
                state.aggregate[k] += fresh[k] / b as f64 - stale[k] / n as f64;
            }
            vector::axpy(1.0, &delta, running);
            for (&i, (new, _)) in batch.indices.iter().zip(&pairs) {
                snap_w[i * d..(i + 1) * d].copy_from_slice(new);
                snap_v[i * d..(i + 1) * d].copy_from_slice(running);
            }
            2 * b as u64
        }
    };
    state.row_writes += writes;
    state.last_row_writes = writes;
    state.iterate = next;

    Ok(StepReceipt {
        step: state.step,
        noise_norm: vector::norm(noise),
        indices: batch.indices.clone(),
        grad_calls: 2 * b as u64,
    })
}

/// `‖ȳ − ∇f(x^t)‖²` at the state's iterate, via an audit gradient that is
/// not charged to the state.
pub fn estimator_error<P: FiniteSumProblem + ?Sized>(state: &EstimatorState, problem: &P) -> f64 {
    discrepancy_sq(&state.aggregate, &true_gradient(problem, &state.iterate))
}
