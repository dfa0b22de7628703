use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::estimator::{InitOption, Mode, SledgeConfig};
use crate::metrics::{discrepancy_sq, true_gradient};
use crate::problems::FiniteSumProblem;
use crate::{par, Result};

use super::{Estimate, Optimizer, Saga, Sarah, Sledge};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscrepancyConfig {
    /// Shared by all three algorithms.
    pub eta: f64,
    pub b: usize,
    /// SARAH inner-loop length.
    pub m: usize,
    pub steps: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_option")]
    pub option: InitOption,
}

fn default_option() -> InitOption {
    InitOption::Full
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancySeries {
    pub algorithm: String,
    pub seed: u64,
    /// `‖v^t − ∇f(x^t)‖²` for `t = 1..=steps`.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub series: Vec<DiscrepancySeries>,
    /// Median over all steps and seeds, per algorithm.
    pub medians: BTreeMap<String, f64>,
}

impl DiscrepancyReport {
    pub fn median(&self, algorithm: &str) -> Option<f64> {
        self.medians.get(algorithm).copied()
    }

    /// Long-format CSV: `algorithm,seed,step,discrepancy_sq`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<W> {
        writeln!(out, "algorithm,seed,step,discrepancy_sq")?;
        for s in &self.series {
            for (t, v) in s.values.iter().enumerate() {
                writeln!(out, "{},{},{},{}", s.algorithm, s.seed, t + 1, v)?;
            }
        }
        Ok(out)
    }
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

fn record<P: FiniteSumProblem + ?Sized>(opt: &mut dyn Optimizer, problem: &P, steps: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        opt.step()?;
        let err = match opt.estimate() {
            Estimate::Exact => 0.0,
            Estimate::At(v) => discrepancy_sq(v, &true_gradient(problem, opt.iterate())),
            Estimate::None => f64::NAN,
        };
        out.push(err);
    }
    Ok(out)
}

/// Runs SLEDGE, SAGA and SARAH from `x0`, each on its own trajectory, and
/// records every step's estimator discrepancy.
pub fn compare_estimator_discrepancy<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    x0: &[f64],
    config: &DiscrepancyConfig,
) -> Result<DiscrepancyReport> {
    const ALGS: [&str; 3] = ["sledge", "saga", "sarah"];
    let jobs: Vec<(usize, u64)> = ALGS
        .iter()
        .enumerate()
        .flat_map(|(a, _)| config.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let results = par::map_indexed(&jobs, |&(a, seed)| -> Result<DiscrepancySeries> {
        let values = match a {
            0 => {
                let c = SledgeConfig { eta: config.eta, b: config.b, steps: config.steps, r: 0.0, option: config.option, seed };
                record(&mut Sledge::new(problem, x0, c, Mode::Efficient)?, problem, config.steps)?
            }
            1 => record(&mut Saga::new(problem, x0, config.eta, config.b, seed)?, problem, config.steps)?,
            _ => record(&mut Sarah::new(problem, x0, config.eta, config.b, config.m, 0.0, seed)?, problem, config.steps)?,
        };
        Ok(DiscrepancySeries { algorithm: ALGS[a].to_string(), seed, values })
    });
    let series: Vec<DiscrepancySeries> = results.into_iter().collect::<Result<_>>()?;
    let mut medians = BTreeMap::new();
    for alg in ALGS {
        let mut pooled: Vec<f64> =
            series.iter().filter(|s| s.algorithm == alg).flat_map(|s| s.values.iter().copied()).collect();
        medians.insert(alg.to_string(), median(&mut pooled));
    }
    Ok(DiscrepancyReport { series, medians })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }
}
