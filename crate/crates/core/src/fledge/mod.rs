//! Federated SLEDGE: a single-process simulation of the server, the active
//! client's local loop and the refresh of sampled clients.
//!
//! Round `t`:
//! 1. the server sends the aggregate `ȳ` and `x^{t−1}` to one random client
//!    `i_t`;
//! 2. `i_t` runs `K` local steps
//!    `x^{t,k} = x^{t,k−1} − η (ȳ + z^{t,k−1}) + ξ^{t,k}` with
//!    `z^{t,k} = z^{t,k−1} + (1/b) Σ_{j∈J} (∇f_{i_t,j}(x^{t,k}) − ∇f_{i_t,j}(x^{t,k−1}))`
//!    and sends `x^t = x^{t,K}` to `p` random clients `I^t`;
//! 3. each `i ∈ I^t` returns `y_i^t` and `Δy_i^t`, both from one size-`Kb`
//!    local minibatch;
//! 4. unsampled rows move by `D = (1/p) Σ_{i∈I^t} Δy_i^t`.
//!
//! The efficient mode keeps the aggregate in `O(pd)` per round, with the
//! same lazy `w_i + (v − v_i)` row representation as the centralized table.

mod ledger;

pub use ledger::{CommLedger, RoundCost};

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::estimator::{sample_ball, InitOption, Mode};
use crate::metrics::{StoppingCriteria, TraceSink};
use crate::optimizers::{drive, DriveOptions, Estimate, Optimizer, RunResult};
use crate::problems::{FederatedProblem, FiniteSumProblem};
use crate::rng::{Purpose, SeedStream};
use crate::{par, vector, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FledgeConfig {
    pub eta: f64,
    /// Clients refreshed per round.
    pub p: usize,
    /// Local minibatch size.
    pub b: usize,
    /// Local steps per round.
    #[serde(rename = "K")]
    pub k: usize,
    /// Round budget.
    #[serde(rename = "T")]
    pub rounds: usize,
    #[serde(default)]
    pub r: f64,
    pub option: InitOption,
    pub seed: u64,
    /// Enlarged refresh minibatches for homogeneous clients. Reserved; must
    /// stay off.
    #[serde(default)]
    pub enlarged_minibatch: bool,
}

impl FledgeConfig {
    pub fn validate(&self, clients: usize) -> Result<()> {
        if self.enlarged_minibatch {
            return Err(Error::Unimplemented("enlarged refresh minibatches".into()));
        }
        if self.p == 0 || self.p > clients {
            return Err(Error::invalid(format!("p must lie in [1, {clients}], got {}", self.p)));
        }
        if self.k == 0 || self.b == 0 {
            return Err(Error::invalid("K and b must be at least 1"));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::invalid(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.r >= 0.0) {
            return Err(Error::invalid(format!("r must be non-negative, got {}", self.r)));
        }
        Ok(())
    }

    fn refresh_size(&self) -> usize {
        self.k * self.b
    }
}

/// Audit record of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReceipt {
    pub round: usize,
    pub active_client: usize,
    pub sampled: Vec<usize>,
    pub noise_norms: Vec<f64>,
    pub grad_calls: u64,
    pub vectors_sent: u64,
}

impl RoundReceipt {
    pub const CSV_HEADER: &'static str = "round,active_client,sampled,noise_norms,grad_calls,vectors_sent";

    /// One CSV row; list fields are `;`-separated.
    pub fn csv_row(&self) -> String {
        let sampled: Vec<String> = self.sampled.iter().map(|i| i.to_string()).collect();
        let norms: Vec<String> = self.noise_norms.iter().map(|v| v.to_string()).collect();
        format!(
            "{},{},{},{},{},{}",
            self.round,
            self.active_client,
            sampled.join(";"),
            norms.join(";"),
            self.grad_calls,
            self.vectors_sent
        )
    }
}

#[derive(Debug, Clone)]
enum Table {
    Naive { rows: Vec<f64> },
    Efficient { running: Vec<f64>, snap_v: Vec<f64>, snap_w: Vec<f64> },
}

/// Local-loop state of the active client, exposed for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerLoopState {
    pub client: usize,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub k: usize,
}

#[derive(Debug, Clone)]
pub struct FederatedState {
    clients: usize,
    d: usize,
    table: Table,
    aggregate: Vec<f64>,
    x: Vec<f64>,
    round: usize,
    ledger: CommLedger,
    last_inner: Option<InnerLoopState>,
    last_shift: Vec<f64>,
    stream: SeedStream,
}

impl FederatedState {
    pub fn mode(&self) -> Mode {
        match self.table {
            Table::Naive { .. } => Mode::Naive,
            Table::Efficient { .. } => Mode::Efficient,
        }
    }

    pub fn iterate(&self) -> &[f64] {
        &self.x
    }

    pub fn aggregate(&self) -> &[f64] {
        &self.aggregate
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    /// Local state at the end of the last round's inner loop.
    pub fn last_inner(&self) -> Option<&InnerLoopState> {
        self.last_inner.as_ref()
    }

    /// `D` of the last round: the shift applied to every unsampled row.
    pub fn last_shift(&self) -> &[f64] {
        &self.last_shift
    }

    /// `y_i` at the current round.
    pub fn row(&self, i: usize) -> Vec<f64> {
        let d = self.d;
        match &self.table {
            Table::Naive { rows } => rows[i * d..(i + 1) * d].to_vec(),
            Table::Efficient { running, snap_v, snap_w } => {
                (0..d).map(|k| snap_w[i * d + k] + (running[k] - snap_v[i * d + k])).collect()
            }
        }
    }

    pub fn materialized_mean(&self) -> Vec<f64> {
        let rows: Vec<Vec<f64>> = (0..self.clients).map(|i| self.row(i)).collect();
        vector::mean_of(&rows, self.d)
    }
}

/// Indices of a size-`m` local minibatch from `0..n`: distinct when
/// `m ≤ n`, with replacement otherwise. Sorted for a fixed summation order.
fn local_batch(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = if m <= n {
        index::sample(rng, n, m).into_vec()
    } else {
        (0..m).map(|_| rng.random_range(0..n)).collect()
    };
    idx.sort_unstable();
    idx
}

fn batch_mean(client: &dyn FiniteSumProblem, batch: &[usize], x: &[f64]) -> Vec<f64> {
    let grads: Vec<Vec<f64>> = batch.iter().map(|&j| client.component_grad(j, x)).collect();
    vector::mean_of(&grads, x.len())
}

fn mean_rows(rows: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut acc = vec![0.0; d];
    for i in 0..n {
        vector::axpy(1.0, &rows[i * d..(i + 1) * d], &mut acc);
    }
    vector::scale(1.0 / n as f64, &mut acc);
    acc
}

pub fn init_fledge(fed: &FederatedProblem, x0: &[f64], config: &FledgeConfig, mode: Mode) -> Result<FederatedState> {
    let (clients, d) = (fed.num_clients(), fed.dim());
    if x0.len() != d {
        return Err(Error::invalid(format!("x0 has length {}, problem dimension is {d}", x0.len())));
    }
    config.validate(clients)?;
    let stream = SeedStream::new(config.seed);
    let kb = config.refresh_size();

    let init_client = |i: usize| {
        let c = fed.client(i);
        let batch = local_batch(c.num_components(), kb, &mut stream.rng2(Purpose::Init, 0, i as u64));
        batch_mean(c, &batch, x0)
    };
    let (rows, participants) = match config.option {
        InitOption::Full => (par::map_range(clients, init_client).concat(), clients),
        InitOption::Minibatch => {
            let mut chosen = index::sample(&mut stream.rng(Purpose::ClientSet, 0), clients, config.p).into_vec();
            chosen.sort_unstable();
            let mean = vector::mean_of(&par::map_indexed(&chosen, |&i| init_client(i)), d);
            (mean.repeat(clients), config.p)
        }
    };
    let aggregate = mean_rows(&rows, clients, d);
    let table = match mode {
        Mode::Naive => Table::Naive { rows },
        Mode::Efficient => Table::Efficient { running: vec![0.0; d], snap_v: vec![0.0; clients * d], snap_w: rows },
    };
    let mut ledger = CommLedger::default();
    // x⁰ out to each participant, one y back from each.
    ledger.charge(0, 2 * participants as u64, (participants * kb) as u64);
    Ok(FederatedState { clients, d, table, aggregate, x: x0.to_vec(), round: 0, ledger, last_inner: None, last_shift: vec![0.0; d], stream })
}

pub fn fledge_round(state: &mut FederatedState, fed: &FederatedProblem, config: &FledgeConfig) -> Result<RoundReceipt> {
    if state.round >= config.rounds {
        return Err(Error::BudgetExhausted { budget: config.rounds });
    }
    let (clients, d, p, b, kk) = (state.clients, state.d, config.p, config.b, config.k);
    let t = state.round + 1;
    let stream = state.stream;

    // Local loop on the active client.
    let active = stream.rng(Purpose::ClientPick, t as u64).random_range(0..clients);
    let client = fed.client(active);
    let mut x = state.x.clone();
    let mut z = vec![0.0; d];
    let mut noise_norms = Vec::with_capacity(kk);
    for k in 1..=kk {
        let prev = x.clone();
        let mut dir = state.aggregate.clone();
        vector::axpy(1.0, &z, &mut dir);
        vector::axpy(-config.eta, &dir, &mut x);
        let xi = sample_ball(d, config.r, &mut stream.rng2(Purpose::Noise, t as u64, k as u64));
        vector::axpy(1.0, &xi, &mut x);
        noise_norms.push(vector::norm(&xi));
        if !vector::is_finite(&x) {
            state.x = x;
            state.round = t;
            return Err(Error::Divergence { step: t, inner: Some(k) });
        }
        let batch = local_batch(client.num_components(), b, &mut stream.rng2(Purpose::LocalBatch, t as u64, k as u64));
        let pairs = par::map_indexed(&batch, |&j| (client.component_grad(j, &x), client.component_grad(j, &prev)));
        let inv_b = 1.0 / b as f64;
        for (new, old) in &pairs {
            for c in 0..d {
                z[c] += inv_b * (new[c] - old[c]);
            }
        }
    }

    // Refresh of the sampled clients at x^t.
    let mut sampled = index::sample(&mut stream.rng(Purpose::ClientSet, t as u64), clients, p).into_vec();
    sampled.sort_unstable();
    let kb = config.refresh_size();
    let prev_x = &state.x;
    let refreshed = par::map_indexed(&sampled, |&i| {
        let c = fed.client(i);
        let batch = local_batch(c.num_components(), kb, &mut stream.rng2(Purpose::LocalBatch, t as u64, (kk + 1 + i) as u64));
        let new = batch_mean(c, &batch, &x);
        let old = batch_mean(c, &batch, prev_x);
        let delta = vector::sub(&new, &old);
        (new, delta)
    });
    let mut shift = vec![0.0; d];
    for (_, delta) in &refreshed {
        vector::axpy(1.0, delta, &mut shift);
    }
    vector::scale(1.0 / p as f64, &mut shift);

    match &mut state.table {
        Table::Naive { rows } => {
            let mut cursor = 0;
            for i in 0..clients {
                let row = &mut rows[i * d..(i + 1) * d];
                if cursor < p && sampled[cursor] == i {
                    row.copy_from_slice(&refreshed[cursor].0);
                    cursor += 1;
                } else {
                    vector::axpy(1.0, &shift, row);
                }
            }
            state.aggregate = mean_rows(rows, clients, d);
        }
        Table::Efficient { running, snap_v, snap_w } => {
            let mut acc: Vec<f64> = shift.iter().map(|s| (clients - p) as f64 * s).collect();
            for (&i, (new, _)) in sampled.iter().zip(&refreshed) {
                for c in 0..d {
                    acc[c] += new[c] - (snap_w[i * d + c] + running[c] - snap_v[i * d + c]);
                }
            }
            vector::axpy(1.0 / clients as f64, &acc, &mut state.aggregate);
            vector::axpy(1.0, &shift, running);
            for (&i, (new, _)) in sampled.iter().zip(&refreshed) {
                snap_w[i * d..(i + 1) * d].copy_from_slice(new);
                snap_v[i * d..(i + 1) * d].copy_from_slice(running);
            }
        }
    }

    let grad_calls = (2 * kk * b + 2 * p * kb) as u64;
    let vectors = 3 * p as u64 + 2;
    state.ledger.charge(t, vectors, grad_calls);
    state.last_inner = Some(InnerLoopState { client: active, x: x.clone(), z, k: kk });
    state.last_shift = shift;
    state.x = x;
    state.round = t;
    Ok(RoundReceipt { round: t, active_client: active, sampled, noise_norms, grad_calls, vectors_sent: vectors })
}

/// Relative error between the maintained aggregate and the mean of the
/// materialised rows.
pub fn audit_server_aggregate(state: &FederatedState) -> f64 {
    vector::rel_err(&state.aggregate, &state.materialized_mean())
}

/// Federated state wrapped as an [`Optimizer`]; one step is one round.
pub struct Fledge<'a> {
    fed: &'a FederatedProblem,
    config: FledgeConfig,
    state: FederatedState,
}

impl<'a> Fledge<'a> {
    pub fn new(fed: &'a FederatedProblem, x0: &[f64], config: FledgeConfig, mode: Mode) -> Result<Self> {
        let state = init_fledge(fed, x0, &config, mode)?;
        Ok(Self { fed, config, state })
    }

    pub fn state(&self) -> &FederatedState {
        &self.state
    }
}

impl Optimizer for Fledge<'_> {
    fn name(&self) -> &'static str {
        "fledge"
    }
    fn iterate(&self) -> &[f64] {
        &self.state.x
    }
    fn grad_calls(&self) -> u64 {
        self.state.ledger.grad_calls
    }
    fn steps(&self) -> usize {
        self.state.round
    }
    fn step(&mut self) -> Result<()> {
        fledge_round(&mut self.state, self.fed, &self.config).map(|_| ())
    }
    fn estimate(&self) -> Estimate<'_> {
        Estimate::At(&self.state.aggregate)
    }
    fn vectors_sent(&self) -> Option<u64> {
        Some(self.state.ledger.vectors_sent)
    }
    fn ledger(&self) -> Option<CommLedger> {
        Some(self.state.ledger.clone())
    }
}

/// Efficient-mode run; stops at `min(config.rounds, stopping.max_steps)`.
pub fn run_fledge<S: TraceSink + ?Sized>(
    fed: &FederatedProblem,
    x0: &[f64],
    config: &FledgeConfig,
    stopping: &StoppingCriteria,
    trace: &mut S,
) -> Result<RunResult> {
    run_fledge_with(fed, x0, config, Mode::Efficient, stopping, trace, DriveOptions::default())
}

pub fn run_fledge_with<S: TraceSink + ?Sized>(
    fed: &FederatedProblem,
    x0: &[f64],
    config: &FledgeConfig,
    mode: Mode,
    stopping: &StoppingCriteria,
    trace: &mut S,
    options: DriveOptions,
) -> Result<RunResult> {
    let mut opt = Fledge::new(fed, x0, config.clone(), mode)?;
    let mut stopping = stopping.clone();
    stopping.max_steps = stopping.max_steps.min(config.rounds);
    drive(&mut opt, fed, &stopping, trace, options)
}
