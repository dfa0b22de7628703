//! Federated objectives `f(x) = (1/P) Σ_i E_j f_{i,j}(x)` and client partitioning.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use super::dataset::LabeledDataset;
use super::logistic::{make_logistic, Grouping};
use super::quadratic::{spectrum_matrix, QuadraticGap, QuadraticProblem};
use super::spectral::{centered_perturbations, max_pairwise_gap, sym_extremes};
use super::{full_grad, full_hessian, full_value, gaussian_vec, FiniteSumProblem, ProblemMetadata};
use crate::rng::{Purpose, SeedStream};
use crate::{vector, Error, Result};

/// `P` clients sharing one parameter dimension; client `i`'s components are
/// the `f_{i,j}`.
#[derive(Clone)]
pub struct FederatedProblem {
    clients: Vec<Arc<dyn FiniteSumProblem>>,
    d: usize,
    metadata: ProblemMetadata,
    gap: Option<QuadraticGap>,
}

impl std::fmt::Debug for FederatedProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FederatedProblem")
            .field("clients", &self.clients.len())
            .field("d", &self.d)
            .field("metadata", &self.metadata)
            .finish()
    }
}

impl FederatedProblem {
    pub fn new(clients: Vec<Arc<dyn FiniteSumProblem>>, metadata: ProblemMetadata) -> Result<Self> {
        let first = clients.first().ok_or_else(|| Error::invalid("need at least one client"))?;
        let d = first.dim();
        if let Some(bad) = clients.iter().position(|c| c.dim() != d) {
            return Err(Error::invalid(format!("client {bad} has dimension {} != {d}", clients[bad].dim())));
        }
        Ok(Self { clients, d, metadata, gap: None })
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn client(&self, i: usize) -> &dyn FiniteSumProblem {
        self.clients[i].as_ref()
    }

    pub fn clients(&self) -> &[Arc<dyn FiniteSumProblem>] {
        &self.clients
    }

    pub fn metadata(&self) -> &ProblemMetadata {
        &self.metadata
    }

    pub fn has_hessian(&self) -> bool {
        self.clients.iter().all(|c| c.has_hessian())
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.clients.iter().map(|c| full_value(c.as_ref(), x)).sum::<f64>() / self.clients.len() as f64
    }

    /// Mean over clients of client mean gradients, in ascending client order.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let per: Vec<Vec<f64>> = self.clients.iter().map(|c| full_grad(c.as_ref(), x)).collect();
        vector::mean_of(&per, self.d)
    }

    pub fn hessian_vector(&self, x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let mut per = Vec::with_capacity(self.clients.len());
        for c in &self.clients {
            per.push(c.hessian_vector(x, v)?);
        }
        Some(vector::mean_of(&per, self.d))
    }

    pub fn optimality_gap(&self, x: &[f64]) -> Option<f64> {
        if let Some(g) = &self.gap {
            return Some(g.eval(x));
        }
        self.metadata.f_star.map(|fs| self.value(x) - fs)
    }

    pub fn minimizer(&self) -> Option<&[f64]> {
        self.gap.as_ref().map(|g| g.minimizer())
    }
}

/// Finite sum whose `i`-th component is client `i`'s mean objective.
pub struct ClientMeans {
    fed: FederatedProblem,
}

impl ClientMeans {
    pub fn new(fed: &FederatedProblem) -> Self {
        Self { fed: fed.clone() }
    }
}

impl FiniteSumProblem for ClientMeans {
    fn num_components(&self) -> usize {
        self.fed.num_clients()
    }
    fn dim(&self) -> usize {
        self.fed.d
    }
    fn component_grad_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&full_grad(self.fed.client(i), x));
    }
    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        full_value(self.fed.client(i), x)
    }
    fn has_hessian(&self) -> bool {
        self.fed.has_hessian()
    }
    fn component_hessian(&self, i: usize, x: &[f64]) -> Option<DMatrix<f64>> {
        full_hessian(self.fed.client(i), x)
    }
    fn hessian_vector(&self, x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        self.fed.hessian_vector(x, v)
    }
    fn metadata(&self) -> &ProblemMetadata {
        &self.fed.metadata
    }
    fn optimality_gap(&self, x: &[f64]) -> Option<f64> {
        self.fed.optimality_gap(x)
    }
}

/// All `f_{i,j}` as one finite sum; only defined when every client holds
/// the same number of components, so the uniform mean matches the
/// federated objective.
pub struct Flattened {
    fed: FederatedProblem,
    per_client: usize,
}

impl Flattened {
    pub fn new(fed: &FederatedProblem) -> Result<Self> {
        let m = fed.client(0).num_components();
        if fed.clients.iter().any(|c| c.num_components() != m) {
            return Err(Error::invalid("flattening needs equal client sizes"));
        }
        Ok(Self { fed: fed.clone(), per_client: m })
    }
}

impl FiniteSumProblem for Flattened {
    fn num_components(&self) -> usize {
        self.per_client * self.fed.num_clients()
    }
    fn dim(&self) -> usize {
        self.fed.d
    }
    fn component_grad_into(&self, k: usize, x: &[f64], out: &mut [f64]) {
        self.fed.client(k / self.per_client).component_grad_into(k % self.per_client, x, out)
    }
    fn component_value(&self, k: usize, x: &[f64]) -> f64 {
        self.fed.client(k / self.per_client).component_value(k % self.per_client, x)
    }
    fn metadata(&self) -> &ProblemMetadata {
        &self.fed.metadata
    }
}

/// Client-partition parameters: `clients` clients, each receiving
/// `samples_per_client` samples of which a fraction `q` comes from its
/// own class.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    pub clients: usize,
    pub q: f64,
    pub samples_per_client: usize,
    /// Clients owning each class. Defaults to `clients / class_count`.
    pub dedicated_per_class: Option<usize>,
    pub seed: u64,
}

/// Sample indices per client, plus the class each client is dedicated to
/// (`None` for clients beyond `classes × dedicated_per_class`).
#[derive(Debug, Clone, PartialEq)]
pub struct ClientPartition {
    pub clients: Vec<Vec<usize>>,
    pub owner: Vec<Option<usize>>,
}

/// Heterogeneous split: each dedicated client takes `round(q·S)` samples of
/// its class and spreads the rest evenly over the other classes, so a
/// fraction `q` of every class sits on its dedicated clients.
pub fn partition_clients(dataset: &LabeledDataset, spec: &PartitionSpec) -> Result<ClientPartition> {
    let classes = dataset.class_count;
    let p = spec.clients;
    let s = spec.samples_per_client;
    if !(0.0..=1.0).contains(&spec.q) {
        return Err(Error::invalid(format!("q must lie in [0, 1], got {}", spec.q)));
    }
    if p == 0 || s == 0 {
        return Err(Error::invalid("need positive client and sample counts"));
    }
    if classes < 2 {
        return Err(Error::invalid("partitioning needs at least two classes"));
    }
    let dedicated = match spec.dedicated_per_class {
        Some(k) => {
            if k * classes > p {
                return Err(Error::invalid(format!(
                    "{k} dedicated clients per class need {} clients, have {p}",
                    k * classes
                )));
            }
            k
        }
        None => {
            if p % classes != 0 {
                return Err(Error::invalid(format!(
                    "P={p} is not a multiple of {classes} classes; set dedicated_per_class"
                )));
            }
            p / classes
        }
    };

    // Per-client class allotments: own-class shares first, then the rest
    // spread evenly with leftovers going to the least-loaded classes.
    let take = ((spec.q * s as f64).round() as usize).min(s);
    let owner: Vec<Option<usize>> = (0..p)
        .map(|i| if dedicated > 0 && i < dedicated * classes { Some(i / dedicated) } else { None })
        .collect();
    let mut allot = vec![vec![0usize; classes]; p];
    let mut totals = vec![0usize; classes];
    for (row, own) in allot.iter_mut().zip(&owner) {
        if let Some(c) = *own {
            row[c] = take;
            totals[c] += take;
        }
    }
    for (row, own) in allot.iter_mut().zip(&owner) {
        let targets: Vec<usize> = (0..classes).filter(|&k| Some(k) != *own).collect();
        let rest = s - row.iter().sum::<usize>();
        let base = rest / targets.len();
        let extra = rest % targets.len();
        for &k in &targets {
            row[k] += base;
        }
        let mut order = targets.clone();
        order.sort_by_key(|&k| (totals[k], k));
        for &k in order.iter().take(extra) {
            row[k] += 1;
        }
        for &k in &targets {
            totals[k] += row[k];
        }
    }

    let stream = SeedStream::new(spec.seed);
    let mut pools = dataset.class_members();
    for (c, pool) in pools.iter_mut().enumerate() {
        let need: usize = allot.iter().map(|r| r[c]).sum();
        if need > pool.len() {
            return Err(Error::invalid(format!("class {c} needs {need} samples but has {}", pool.len())));
        }
        pool.shuffle(&mut stream.rng(Purpose::Generator, c as u64));
    }
    let mut cursor = vec![0usize; classes];
    let clients = allot
        .iter()
        .map(|row| {
            let mut mine = Vec::with_capacity(s);
            for (c, &k) in row.iter().enumerate() {
                mine.extend_from_slice(&pools[c][cursor[c]..cursor[c] + k]);
                cursor[c] += k;
            }
            mine
        })
        .collect();
    Ok(ClientPartition { clients, owner })
}

/// One logistic client per partition cell, one component per sample.
pub fn federated_logistic(dataset: Arc<LabeledDataset>, partition: &ClientPartition, lambda: f64) -> Result<FederatedProblem> {
    let mut clients: Vec<Arc<dyn FiniteSumProblem>> = Vec::with_capacity(partition.clients.len());
    let mut lip = 0.0_f64;
    for cell in &partition.clients {
        let groups = cell.iter().map(|&s| vec![s]).collect();
        let prob = make_logistic(dataset.clone(), lambda, Grouping::Explicit(groups))?;
        lip = lip.max(prob.metadata().lipschitz.unwrap_or(0.0));
        clients.push(Arc::new(prob));
    }
    let metadata = ProblemMetadata {
        lipschitz: Some(lip),
        mu: if lambda > 0.0 { Some(lambda) } else { None },
        ..Default::default()
    };
    FederatedProblem::new(clients, metadata)
}

/// Federated quadratic family.
///
/// Client `i` has mean Hessian `A_i = Ā + (zeta/2) S_i` with `Σ S_i = 0`,
/// `‖S_i‖ ≤ 1`; inside a client, `A_{i,j} = A_i + (sigma/2) T_{i,j}` and
/// `b_{i,j} = b_i + sigma c_{i,j}` with zero-sum perturbations, so
/// `sigma = 0` makes every component of a client identical.
#[derive(Debug, Clone, PartialEq)]
pub struct FederatedQuadraticSpec {
    pub clients: usize,
    pub components_per_client: usize,
    pub d: usize,
    pub mu: f64,
    pub l: f64,
    pub zeta: f64,
    pub sigma: f64,
    pub seed: u64,
}

pub fn make_federated_quadratic(spec: &FederatedQuadraticSpec) -> Result<FederatedProblem> {
    super::check_dims(spec.d, spec.clients)?;
    if spec.components_per_client == 0 {
        return Err(Error::invalid("components_per_client must be positive"));
    }
    if !(spec.mu > 0.0 && spec.mu <= spec.l) {
        return Err(Error::invalid("need 0 < mu <= L"));
    }
    if spec.zeta < 0.0 || spec.sigma < 0.0 {
        return Err(Error::invalid("zeta and sigma must be non-negative"));
    }
    let (d, p, m) = (spec.d, spec.clients, spec.components_per_client);
    let stream = SeedStream::new(spec.seed);
    let mut rng = stream.rng(Purpose::Generator, 100);
    let mean = spectrum_matrix(&mut rng, d, spec.mu, spec.l);
    let client_hess: Vec<DMatrix<f64>> = if spec.zeta == 0.0 {
        vec![mean.clone(); p]
    } else {
        centered_perturbations(&mut rng, d, p)
            .into_iter()
            .map(|s| &mean + s * (spec.zeta / 2.0))
            .collect()
    };
    let client_lin: Vec<Vec<f64>> = (0..p).map(|_| gaussian_vec(&mut rng, d)).collect();

    let mut clients: Vec<Arc<dyn FiniteSumProblem>> = Vec::with_capacity(p);
    let mut lip = 0.0_f64;
    let mut means = Vec::with_capacity(p);
    let mut lin_means = Vec::with_capacity(p);
    for i in 0..p {
        let mut crng = stream.rng(Purpose::Generator, 200 + i as u64);
        let (hs, bs): (Vec<DMatrix<f64>>, Vec<Vec<f64>>) = if spec.sigma == 0.0 {
            (vec![client_hess[i].clone(); m], vec![client_lin[i].clone(); m])
        } else {
            let ts = centered_perturbations(&mut crng, d, m);
            let mut cs: Vec<Vec<f64>> = (0..m).map(|_| gaussian_vec(&mut crng, d)).collect();
            let cbar = vector::mean_of(&cs, d);
            for c in cs.iter_mut() {
                vector::axpy(-1.0, &cbar, c);
            }
            let hs = ts.into_iter().map(|t| &client_hess[i] + t * (spec.sigma / 2.0)).collect();
            let bs = cs
                .into_iter()
                .map(|c| client_lin[i].iter().zip(&c).map(|(b, e)| b + spec.sigma * e).collect())
                .collect();
            (hs, bs)
        };
        let q = QuadraticProblem::from_parts(hs, bs)?;
        lip = lip.max(q.metadata().lipschitz.unwrap_or(0.0));
        means.push(q.mean_hessian().clone());
        lin_means.push(q.mean_linear().to_vec());
        clients.push(Arc::new(q));
    }

    let mut global = DMatrix::zeros(d, d);
    for h in &means {
        global += h;
    }
    global /= p as f64;
    let global_lin = vector::mean_of(&lin_means, d);
    let (lo, hi) = sym_extremes(&global);
    let chol = global
        .clone()
        .cholesky()
        .ok_or_else(|| Error::invalid("global Hessian is not positive definite"))?;
    let xs = chol.solve(&(-DVector::from_column_slice(&global_lin)));
    let f_star = 0.5 * vector::dot(&global_lin, xs.as_slice());
    let metadata = ProblemMetadata {
        lipschitz: Some(lip.max(hi)),
        mu: Some(lo),
        zeta: Some(max_pairwise_gap(&means)),
        rho: Some(0.0),
        f_star: Some(f_star),
        ..Default::default()
    };
    let mut fed = FederatedProblem::new(clients, metadata)?;
    fed.gap = Some(QuadraticGap::new(&global, xs.as_slice().to_vec()));
    Ok(fed)
}
