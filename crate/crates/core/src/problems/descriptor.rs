//! JSON problem descriptors, e.g.
//! `{"kind":"quadratic_pl","d":20,"mu":0.1,"L":1.0,"n":64,"zeta":0.2,"seed":7}`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::dataset::{load_libsvm, synthetic_classification, LabeledDataset, SyntheticClassSpec};
use super::federated::{
    federated_logistic, make_federated_quadratic, partition_clients, FederatedProblem, FederatedQuadraticSpec,
    PartitionSpec,
};
use super::logistic::{class_groups, make_logistic, Grouping};
use super::quadratic::make_quadratic_pl;
use super::saddle::{make_saddle_ensemble_with, DEFAULT_SADDLE_SPREAD};
use super::FiniteSumProblem;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Libsvm {
        path: String,
    },
    Synthetic {
        classes: usize,
        samples_per_class: usize,
        features: usize,
        #[serde(default = "one")]
        separation: f64,
        #[serde(default = "one")]
        noise: f64,
        #[serde(default = "yes")]
        bias: bool,
        #[serde(default)]
        seed: u64,
    },
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "by", rename_all = "snake_case", deny_unknown_fields)]
pub enum GroupingSpec {
    PerSample,
    Chunks { size: usize },
    ClassGroups { groups_per_class: usize, samples_per_group: usize, #[serde(default)] seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemDescriptor {
    QuadraticPl {
        d: usize,
        mu: f64,
        #[serde(rename = "L")]
        l: f64,
        n: usize,
        zeta: f64,
        #[serde(default)]
        seed: u64,
    },
    Saddle {
        d: usize,
        n: usize,
        gamma: f64,
        #[serde(default)]
        spread: Option<f64>,
        #[serde(default)]
        seed: u64,
    },
    Logistic {
        dataset: DatasetSource,
        lambda: f64,
        grouping: GroupingSpec,
    },
    FederatedQuadratic {
        #[serde(rename = "P")]
        clients: usize,
        components_per_client: usize,
        d: usize,
        mu: f64,
        #[serde(rename = "L")]
        l: f64,
        zeta: f64,
        sigma: f64,
        #[serde(default)]
        seed: u64,
    },
    FederatedLogistic {
        dataset: DatasetSource,
        lambda: f64,
        #[serde(rename = "P")]
        clients: usize,
        q: f64,
        samples_per_client: usize,
        #[serde(default)]
        dedicated_per_class: Option<usize>,
        #[serde(default)]
        seed: u64,
    },
}

/// Result of building a descriptor.
#[derive(Clone)]
pub enum BuiltProblem {
    Centralized(Arc<dyn FiniteSumProblem>),
    Federated(FederatedProblem),
}

impl BuiltProblem {
    pub fn dim(&self) -> usize {
        match self {
            BuiltProblem::Centralized(p) => p.dim(),
            BuiltProblem::Federated(f) => f.dim(),
        }
    }
}

impl DatasetSource {
    /// Loads or generates the dataset; relative paths resolve against `base`.
    pub fn load(&self, base: Option<&Path>) -> Result<LabeledDataset> {
        match self {
            DatasetSource::Libsvm { path } => {
                let p = Path::new(path);
                match base {
                    Some(b) if p.is_relative() => load_libsvm(b.join(p)),
                    _ => load_libsvm(p),
                }
            }
            DatasetSource::Synthetic { classes, samples_per_class, features, separation, noise, bias, seed } => {
                synthetic_classification(&SyntheticClassSpec {
                    classes: *classes,
                    samples_per_class: *samples_per_class,
                    features: *features,
                    separation: *separation,
                    noise: *noise,
                    bias: *bias,
                    seed: *seed,
                })
            }
        }
    }
}

impl ProblemDescriptor {
    pub fn is_federated(&self) -> bool {
        matches!(self, ProblemDescriptor::FederatedQuadratic { .. } | ProblemDescriptor::FederatedLogistic { .. })
    }

    pub fn build(&self, base: Option<&Path>) -> Result<BuiltProblem> {
        Ok(match self {
            ProblemDescriptor::QuadraticPl { d, mu, l, n, zeta, seed } => {
                BuiltProblem::Centralized(Arc::new(make_quadratic_pl(*d, *mu, *l, *n, *zeta, *seed)?))
            }
            ProblemDescriptor::Saddle { d, n, gamma, spread, seed } => BuiltProblem::Centralized(Arc::new(
                make_saddle_ensemble_with(*d, *n, *gamma, spread.unwrap_or(DEFAULT_SADDLE_SPREAD), *seed)?,
            )),
            ProblemDescriptor::Logistic { dataset, lambda, grouping } => {
                let ds = Arc::new(dataset.load(base)?);
                let grouping = match grouping {
                    GroupingSpec::PerSample => Grouping::PerSample,
                    GroupingSpec::Chunks { size } => Grouping::Chunks(*size),
                    GroupingSpec::ClassGroups { groups_per_class, samples_per_group, seed } => {
                        Grouping::Explicit(class_groups(&ds, *groups_per_class, *samples_per_group, *seed)?)
                    }
                };
                BuiltProblem::Centralized(Arc::new(make_logistic(ds, *lambda, grouping)?))
            }
            ProblemDescriptor::FederatedQuadratic { clients, components_per_client, d, mu, l, zeta, sigma, seed } => {
                BuiltProblem::Federated(make_federated_quadratic(&FederatedQuadraticSpec {
                    clients: *clients,
                    components_per_client: *components_per_client,
                    d: *d,
                    mu: *mu,
                    l: *l,
                    zeta: *zeta,
                    sigma: *sigma,
                    seed: *seed,
                })?)
            }
            ProblemDescriptor::FederatedLogistic {
                dataset,
                lambda,
                clients,
                q,
                samples_per_client,
                dedicated_per_class,
                seed,
            } => {
                let ds = Arc::new(dataset.load(base)?);
                let part = partition_clients(
                    &ds,
                    &PartitionSpec {
                        clients: *clients,
                        q: *q,
                        samples_per_client: *samples_per_client,
                        dedicated_per_class: *dedicated_per_class,
                        seed: *seed,
                    },
                )?;
                BuiltProblem::Federated(federated_logistic(ds, &part, *lambda)?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_quadratic_descriptor() {
        let d: ProblemDescriptor =
            serde_json::from_str(r#"{"kind":"quadratic_pl","d":3,"mu":0.5,"L":1.0,"n":4,"zeta":0.1,"seed":2}"#).unwrap();
        let BuiltProblem::Centralized(p) = d.build(None).unwrap() else { panic!() };
        assert_eq!((p.dim(), p.num_components()), (3, 4));
    }

    #[test]
    fn unknown_keys_rejected() {
        let r: std::result::Result<ProblemDescriptor, _> =
            serde_json::from_str(r#"{"kind":"saddle","d":3,"n":4,"gamma":0.5,"extra":1}"#);
        assert!(r.is_err());
        let r: std::result::Result<ProblemDescriptor, _> = serde_json::from_str(
            r#"{"kind":"logistic","lambda":0.1,"grouping":{"by":"per_sample"},
                "dataset":{"source":"synthetic","classes":2,"samples_per_class":3,"features":2,"bogus":0}}"#,
        );
        assert!(r.is_err());
    }

    #[test]
    fn federated_logistic_descriptor_builds() {
        let d: ProblemDescriptor = serde_json::from_str(
            r#"{"kind":"federated_logistic","lambda":0.01,"P":4,"q":0.5,"samples_per_client":5,
                "dataset":{"source":"synthetic","classes":2,"samples_per_class":20,"features":3}}"#,
        )
        .unwrap();
        let BuiltProblem::Federated(f) = d.build(None).unwrap() else { panic!() };
        assert_eq!(f.num_clients(), 4);
        assert_eq!(f.dim(), 6);
    }
}
