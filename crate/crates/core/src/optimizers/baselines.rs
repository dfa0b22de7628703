use crate::estimator::{sample_ball, IndexPool, MinibatchSample};
use crate::metrics::{Centralized, StoppingCriteria, TraceSink};
use crate::problems::{full_grad, FiniteSumProblem};
use crate::rng::{Purpose, SeedStream};
use crate::{par, vector, Error, Result};

use super::{drive, DriveOptions, Estimate, Optimizer, RunResult};

fn check_common(n: usize, d: usize, x0: &[f64], eta: f64, b: usize) -> Result<()> {
    if x0.len() != d {
        return Err(Error::invalid(format!("x0 has length {}, problem dimension is {d}", x0.len())));
    }
    if b == 0 || b > n {
        return Err(Error::invalid(format!("b must lie in [1, {n}], got {b}")));
    }
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::invalid(format!("eta must be non-negative, got {eta}")));
    }
    Ok(())
}

fn batch_grads<P: FiniteSumProblem + ?Sized>(problem: &P, batch: &MinibatchSample, x: &[f64]) -> Vec<Vec<f64>> {
    par::map_indexed(&batch.indices, |&i| problem.component_grad(i, x))
}

/// Minibatch SGD without replacement inside a batch.
pub struct Sgd<'a, P: ?Sized> {
    problem: &'a P,
    x: Vec<f64>,
    eta: f64,
    b: usize,
    pool: IndexPool,
    stream: SeedStream,
    t: usize,
    calls: u64,
}

impl<'a, P: FiniteSumProblem + ?Sized> Sgd<'a, P> {
    pub fn new(problem: &'a P, x0: &[f64], eta: f64, b: usize, seed: u64) -> Result<Self> {
        let n = problem.num_components();
        check_common(n, problem.dim(), x0, eta, b)?;
        Ok(Self {
            problem,
            x: x0.to_vec(),
            eta,
            b,
            pool: IndexPool::new(n),
            stream: SeedStream::new(seed),
            t: 0,
            calls: 0,
        })
    }
}

impl<P: FiniteSumProblem + ?Sized> Optimizer for Sgd<'_, P> {
    fn name(&self) -> &'static str {
        "sgd"
    }
    fn iterate(&self) -> &[f64] {
        &self.x
    }
    fn grad_calls(&self) -> u64 {
        self.calls
    }
    fn steps(&self) -> usize {
        self.t
    }
    fn step(&mut self) -> Result<()> {
        self.t += 1;
        let batch = self.pool.sample(self.b, &mut self.stream.rng(Purpose::Minibatch, self.t as u64));
        let g = vector::mean_of(&batch_grads(self.problem, &batch, &self.x), self.x.len());
        self.calls += self.b as u64;
        vector::axpy(-self.eta, &g, &mut self.x);
        Ok(())
    }
    fn estimate(&self) -> Estimate<'_> {
        Estimate::None
    }
}

/// SAGA: a table of the last gradient seen per component, with
/// `v = (1/b) Σ_{i∈I} (∇f_i(x) − g_i) + mean(g)`.
///
/// The table is filled at `x⁰` and `v⁰` is its mean. Each step moves
/// `x ← x − η v`, then samples at the new point, so [`Optimizer::estimate`]
/// is always an estimate of the gradient at the current iterate.
pub struct Saga<'a, P: ?Sized> {
    problem: &'a P,
    x: Vec<f64>,
    v: Vec<f64>,
    table: Vec<f64>,
    table_mean: Vec<f64>,
    eta: f64,
    b: usize,
    pool: IndexPool,
    stream: SeedStream,
    t: usize,
    calls: u64,
}

impl<'a, P: FiniteSumProblem + ?Sized> Saga<'a, P> {
    pub fn new(problem: &'a P, x0: &[f64], eta: f64, b: usize, seed: u64) -> Result<Self> {
        let (n, d) = (problem.num_components(), problem.dim());
        check_common(n, d, x0, eta, b)?;
        let grads = par::map_range(n, |i| problem.component_grad(i, x0));
        let table_mean = vector::mean_of(&grads, d);
        Ok(Self {
            problem,
            x: x0.to_vec(),
            v: table_mean.clone(),
            table: grads.concat(),
            table_mean,
            eta,
            b,
            pool: IndexPool::new(n),
            stream: SeedStream::new(seed),
            t: 0,
            calls: n as u64,
        })
    }

    /// The estimate a fresh minibatch would give at the current state,
    /// without updating anything (used by the unbiasedness check).
    pub fn probe(&self, batch: &MinibatchSample) -> Vec<f64> {
        self.combine(batch, &batch_grads(self.problem, batch, &self.x))
    }

    fn combine(&self, batch: &MinibatchSample, grads: &[Vec<f64>]) -> Vec<f64> {
        let d = self.x.len();
        let mut v = self.table_mean.clone();
        let inv_b = 1.0 / batch.len() as f64;
        for (&i, g) in batch.indices.iter().zip(grads) {
            for k in 0..d {
                v[k] += inv_b * (g[k] - self.table[i * d + k]);
            }
        }
        v
    }
}

impl<P: FiniteSumProblem + ?Sized> Optimizer for Saga<'_, P> {
    fn name(&self) -> &'static str {
        "saga"
    }
    fn iterate(&self) -> &[f64] {
        &self.x
    }
    fn grad_calls(&self) -> u64 {
        self.calls
    }
    fn steps(&self) -> usize {
        self.t
    }
    fn step(&mut self) -> Result<()> {
        let d = self.x.len();
        let n = self.problem.num_components() as f64;
        vector::axpy(-self.eta, &self.v, &mut self.x);
        self.t += 1;
        let batch = self.pool.sample(self.b, &mut self.stream.rng(Purpose::Minibatch, self.t as u64));
        let grads = batch_grads(self.problem, &batch, &self.x);
        self.v = self.combine(&batch, &grads);
        self.calls += self.b as u64;
        for (&i, g) in batch.indices.iter().zip(&grads) {
            let row = &mut self.table[i * d..(i + 1) * d];
            for k in 0..d {
                self.table_mean[k] += (g[k] - row[k]) / n;
            }
            row.copy_from_slice(g);
        }
        Ok(())
    }
    fn estimate(&self) -> Estimate<'_> {
        Estimate::At(&self.v)
    }
}

/// Double-loop SARAH. Each epoch starts from a full gradient and runs `m`
/// steps in total; the remaining `m − 1` estimates follow the recursion
/// `v^k = (1/b) Σ_{i∈I^k} (∇f_i(x^k) − ∇f_i(x^{k−1})) + v^{k−1}`.
/// A positive `noise_r` adds ball noise to every update.
pub struct Sarah<'a, P: ?Sized> {
    problem: &'a P,
    x: Vec<f64>,
    v: Vec<f64>,
    eta: f64,
    b: usize,
    m: usize,
    noise_r: f64,
    /// Position within the epoch; 0 means the next step refreshes.
    k: usize,
    pool: IndexPool,
    stream: SeedStream,
    t: usize,
    calls: u64,
    refreshes: u64,
    recursions: u64,
}

impl<'a, P: FiniteSumProblem + ?Sized> Sarah<'a, P> {
    pub fn new(problem: &'a P, x0: &[f64], eta: f64, b: usize, m: usize, noise_r: f64, seed: u64) -> Result<Self> {
        let n = problem.num_components();
        check_common(n, problem.dim(), x0, eta, b)?;
        if m == 0 {
            return Err(Error::invalid("inner-loop length m must be at least 1"));
        }
        if !(noise_r >= 0.0) {
            return Err(Error::invalid(format!("noise radius must be non-negative, got {noise_r}")));
        }
        Ok(Self {
            problem,
            x: x0.to_vec(),
            v: vec![0.0; x0.len()],
            eta,
            b,
            m,
            noise_r,
            k: 0,
            pool: IndexPool::new(n),
            stream: SeedStream::new(seed),
            t: 0,
            calls: 0,
            refreshes: 0,
            recursions: 0,
        })
    }

    /// Full-gradient refreshes so far.
    pub fn refreshes(&self) -> u64 {
        self.refreshes
    }

    /// Recursive (`2b`-cost) updates so far.
    pub fn recursions(&self) -> u64 {
        self.recursions
    }
}

impl<P: FiniteSumProblem + ?Sized> Optimizer for Sarah<'_, P> {
    fn name(&self) -> &'static str {
        if self.noise_r > 0.0 {
            "ssrgd"
        } else {
            "sarah"
        }
    }
    fn iterate(&self) -> &[f64] {
        &self.x
    }
    fn grad_calls(&self) -> u64 {
        self.calls
    }
    fn steps(&self) -> usize {
        self.t
    }
    fn step(&mut self) -> Result<()> {
        if self.k == 0 {
            self.v = full_grad(self.problem, &self.x);
            self.calls += self.problem.num_components() as u64;
            self.refreshes += 1;
        }
        self.t += 1;
        let prev = self.x.clone();
        vector::axpy(-self.eta, &self.v, &mut self.x);
        if self.noise_r > 0.0 {
            let xi = sample_ball(self.x.len(), self.noise_r, &mut self.stream.rng(Purpose::Noise, self.t as u64));
            vector::axpy(1.0, &xi, &mut self.x);
        }
        self.k += 1;
        if self.k < self.m {
            let batch = self.pool.sample(self.b, &mut self.stream.rng(Purpose::Minibatch, self.t as u64));
            let x = &self.x;
            let pairs = par::map_indexed(&batch.indices, |&i| {
                (self.problem.component_grad(i, x), self.problem.component_grad(i, &prev))
            });
            let inv_b = 1.0 / self.b as f64;
            for (new, old) in &pairs {
                for k in 0..self.v.len() {
                    self.v[k] += inv_b * (new[k] - old[k]);
                }
            }
            self.calls += 2 * self.b as u64;
            self.recursions += 1;
        } else {
            self.k = 0;
        }
        Ok(())
    }
    fn estimate(&self) -> Estimate<'_> {
        if self.k == 0 {
            Estimate::Exact
        } else {
            Estimate::At(&self.v)
        }
    }
}

pub fn run_sgd<P, S>(
    problem: &P,
    x0: &[f64],
    eta: f64,
    b: usize,
    stopping: &StoppingCriteria,
    trace: &mut S,
    seed: u64,
) -> Result<RunResult>
where
    P: FiniteSumProblem,
    S: TraceSink + ?Sized,
{
    let mut opt = Sgd::new(problem, x0, eta, b, seed)?;
    drive(&mut opt, &Centralized(problem), stopping, trace, DriveOptions::default())
}

pub fn run_saga<P, S>(
    problem: &P,
    x0: &[f64],
    eta: f64,
    b: usize,
    stopping: &StoppingCriteria,
    trace: &mut S,
    seed: u64,
) -> Result<RunResult>
where
    P: FiniteSumProblem,
    S: TraceSink + ?Sized,
{
    let mut opt = Saga::new(problem, x0, eta, b, seed)?;
    drive(&mut opt, &Centralized(problem), stopping, trace, DriveOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn run_sarah<P, S>(
    problem: &P,
    x0: &[f64],
    eta: f64,
    b: usize,
    m: usize,
    noise_r: f64,
    stopping: &StoppingCriteria,
    trace: &mut S,
    seed: u64,
) -> Result<RunResult>
where
    P: FiniteSumProblem,
    S: TraceSink + ?Sized,
{
    let mut opt = Sarah::new(problem, x0, eta, b, m, noise_r, seed)?;
    drive(&mut opt, &Centralized(problem), stopping, trace, DriveOptions::default())
}
