use serde::{Deserialize, Serialize};

use super::Objective;
use crate::{vector, Error, Result};

pub const DEFAULT_CHECK_INTERVAL: usize = 10;

fn default_interval() -> usize {
    DEFAULT_CHECK_INTERVAL
}

/// When to stop. `eps` and `delta` combine into one second-order target
/// (`‖∇f‖ ≤ eps` and `λ_min ≥ −delta`); `value_gap` fires on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingCriteria {
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub value_gap: Option<f64>,
    pub max_steps: usize,
    /// Audit every this many steps (or rounds).
    #[serde(default = "default_interval")]
    pub check_interval: usize,
}

impl StoppingCriteria {
    pub fn max_steps(max_steps: usize) -> Self {
        Self { eps: None, delta: None, value_gap: None, max_steps, check_interval: DEFAULT_CHECK_INTERVAL }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = Some(eps);
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = Some(delta);
        self
    }

    pub fn with_value_gap(mut self, gap: f64) -> Self {
        self.value_gap = Some(gap);
        self
    }

    pub fn every(mut self, interval: usize) -> Self {
        self.check_interval = interval;
        self
    }

    /// Checked once at run start so a run never fails half-way on config.
    pub fn validate<O: Objective + ?Sized>(&self, objective: &O) -> Result<()> {
        if self.check_interval == 0 {
            return Err(Error::Config("check_interval must be positive".into()));
        }
        if self.delta.is_some() && !objective.supports_curvature() {
            return Err(Error::Config("delta criterion needs a Hessian or Hessian-vector oracle".into()));
        }
        if self.value_gap.is_some() && !objective.has_gap() {
            return Err(Error::Config("value_gap criterion needs a known f*".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    FirstOrder,
    SecondOrder,
    ValueGap,
    MaxSteps,
}

/// Audited quantities at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Audit {
    pub f_value: f64,
    pub grad: Vec<f64>,
    pub grad_norm: f64,
    pub gap: Option<f64>,
    pub lambda_min: Option<f64>,
    pub accuracy: Option<f64>,
}

impl Audit {
    pub fn at<O: Objective + ?Sized>(objective: &O, x: &[f64], criteria: &StoppingCriteria) -> Result<Self> {
        let grad = objective.gradient(x);
        let lambda_min = if criteria.delta.is_some() { Some(objective.lambda_min(x)?) } else { None };
        Ok(Self {
            f_value: objective.value(x),
            grad_norm: vector::norm(&grad),
            grad,
            gap: objective.gap(x),
            lambda_min,
            accuracy: objective.accuracy(x),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub fired: Option<StopReason>,
    pub audit: Audit,
}

impl Verdict {
    pub fn stopped(&self) -> bool {
        self.fired.is_some()
    }
}

/// Evaluates the point-wise criteria (not `max_steps`) from an audit.
pub fn evaluate(criteria: &StoppingCriteria, audit: &Audit) -> Option<StopReason> {
    let first_ok = criteria.eps.map(|e| audit.grad_norm <= e);
    let second_ok = criteria.delta.map(|d| audit.lambda_min.is_some_and(|l| l >= -d));
    match (first_ok, second_ok) {
        (Some(true), None) => return Some(StopReason::FirstOrder),
        (Some(true), Some(true)) | (None, Some(true)) => return Some(StopReason::SecondOrder),
        _ => {}
    }
    if let (Some(target), Some(gap)) = (criteria.value_gap, audit.gap) {
        if gap <= target {
            return Some(StopReason::ValueGap);
        }
    }
    None
}

pub fn check_stopping<O: Objective + ?Sized>(criteria: &StoppingCriteria, objective: &O, x: &[f64]) -> Result<Verdict> {
    let audit = Audit::at(objective, x, criteria)?;
    Ok(Verdict { fired: evaluate(criteria, &audit), audit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Centralized;
    use crate::problems::{make_logistic, make_quadratic_pl, make_saddle_ensemble, synthetic_classification, Grouping, SyntheticClassSpec};

    #[test]
    fn infinite_eps_fires_immediately() {
        let p = make_quadratic_pl(3, 0.5, 1.0, 2, 0.1, 0).unwrap();
        let c = StoppingCriteria::max_steps(10).with_eps(f64::INFINITY);
        let v = check_stopping(&c, &Centralized(&p), &[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(v.fired, Some(StopReason::FirstOrder));
    }

    #[test]
    fn minimizer_fires_first_order() {
        let p = make_quadratic_pl(3, 0.5, 1.0, 2, 0.1, 0).unwrap();
        let xs = p.minimizer().unwrap().to_vec();
        let c = StoppingCriteria::max_steps(10).with_eps(1e-6).with_delta(f64::INFINITY);
        let v = check_stopping(&c, &Centralized(&p), &xs).unwrap();
        assert!(v.stopped());
        let c = StoppingCriteria::max_steps(10).with_eps(1e-6);
        assert_eq!(check_stopping(&c, &Centralized(&p), &xs).unwrap().fired, Some(StopReason::FirstOrder));
    }

    #[test]
    fn saddle_is_first_order_but_not_second_order() {
        let gamma = 0.5;
        let p = make_saddle_ensemble(6, 5, gamma, 1).unwrap();
        let c = StoppingCriteria::max_steps(10).with_eps(1e-3).with_delta(gamma / 2.0);
        let v = check_stopping(&c, &Centralized(&p), &[0.0; 6]).unwrap();
        assert!(v.audit.grad_norm <= 1e-3);
        assert!(v.audit.lambda_min.unwrap() < -gamma / 2.0);
        assert!(!v.stopped());
    }

    #[test]
    fn value_gap_fires() {
        let p = make_quadratic_pl(2, 1.0, 1.0, 1, 0.0, 0).unwrap();
        let xs = p.minimizer().unwrap().to_vec();
        let c = StoppingCriteria::max_steps(1).with_value_gap(1e-12);
        assert_eq!(check_stopping(&c, &Centralized(&p), &xs).unwrap().fired, Some(StopReason::ValueGap));
    }

    #[test]
    fn delta_without_curvature_is_config_error() {
        let ds = std::sync::Arc::new(
            synthetic_classification(&SyntheticClassSpec {
                classes: 2,
                samples_per_class: 2,
                features: 2,
                separation: 1.0,
                noise: 1.0,
                bias: false,
                seed: 0,
            })
            .unwrap(),
        );
        let p = make_logistic(ds, 0.0, Grouping::PerSample).unwrap();
        // logistic has curvature; a problem without f* rejects value_gap
        let c = StoppingCriteria::max_steps(1).with_value_gap(1.0);
        assert!(matches!(c.validate(&Centralized(&p)), Err(Error::Config(_))));
        let c = StoppingCriteria::max_steps(1).with_delta(1.0);
        assert!(c.validate(&Centralized(&p)).is_ok());
    }
}
