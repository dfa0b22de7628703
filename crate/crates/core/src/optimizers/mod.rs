//! Optimization drivers.
//!
//! Every algorithm implements [`Optimizer`]; [`drive`] runs any of them
//! against an [`Objective`] with the same audit, stopping and trace logic,
//! so traces from different algorithms are directly comparable.

mod baselines;
mod discrepancy;
mod sledge;

pub use baselines::{run_saga, run_sarah, run_sgd, Saga, Sarah, Sgd};
pub use discrepancy::{compare_estimator_discrepancy, DiscrepancyConfig, DiscrepancyReport, DiscrepancySeries};
pub use sledge::{run_sledge, run_sledge_with, Sledge};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::fledge::CommLedger;
use crate::metrics::{discrepancy_sq, evaluate, Audit, Objective, StopReason, StoppingCriteria, TraceRecord, TraceSink};
use crate::{vector, Error, Result};

/// What an optimizer currently uses as its gradient estimate at
/// [`Optimizer::iterate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimate<'a> {
    /// The algorithm keeps no estimator (plain SGD).
    None,
    /// The next step uses the exact gradient at the iterate.
    Exact,
    /// An explicit estimate of `∇f(iterate)`.
    At(&'a [f64]),
}

pub trait Optimizer {
    fn name(&self) -> &'static str;
    fn iterate(&self) -> &[f64];
    /// Oracle calls charged to the algorithm so far.
    fn grad_calls(&self) -> u64;
    fn steps(&self) -> usize;
    fn step(&mut self) -> Result<()>;
    fn estimate(&self) -> Estimate<'_>;
    fn vectors_sent(&self) -> Option<u64> {
        None
    }
    fn ledger(&self) -> Option<CommLedger> {
        None
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriveOptions {
    /// Fill the trace's `wall_time` column. Off by default so traces are
    /// byte-reproducible.
    pub record_wall_time: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algorithm: String,
    pub final_iterate: Vec<f64>,
    /// Audited iterate with the smallest `‖∇f‖`.
    pub best_iterate: Vec<f64>,
    pub best_step: usize,
    pub best_grad_norm: f64,
    pub final_grad_norm: f64,
    pub final_value: f64,
    pub final_gap: Option<f64>,
    pub final_accuracy: Option<f64>,
    pub grad_calls: u64,
    pub steps: usize,
    pub stop_reason: StopReason,
    /// Gradient evaluations spent by audits (not part of `grad_calls`).
    pub audit_grad_calls: u64,
    pub vectors_sent: Option<u64>,
    pub ledger: Option<CommLedger>,
}

/// Runs `opt` until a criterion fires or `stopping.max_steps` steps are
/// taken. Audits happen at step 0, every `check_interval` steps, and at the
/// last step; each audit emits one trace record.
pub fn drive<O, F, S>(
    opt: &mut O,
    objective: &F,
    stopping: &StoppingCriteria,
    trace: &mut S,
    options: DriveOptions,
) -> Result<RunResult>
where
    O: Optimizer + ?Sized,
    F: Objective + ?Sized,
    S: TraceSink + ?Sized,
{
    stopping.validate(objective)?;
    if opt.iterate().len() != objective.dim() {
        return Err(Error::invalid("optimizer and objective dimensions differ"));
    }
    let start = Instant::now();
    let mut audits = 0u64;

    let audit_now = |opt: &O, audits: &mut u64| -> Result<(Audit, TraceRecord)> {
        let audit = Audit::at(objective, opt.iterate(), stopping)?;
        *audits += 1;
        let estimator_error_sq = match opt.estimate() {
            Estimate::None => None,
            Estimate::Exact => Some(0.0),
            Estimate::At(v) => Some(discrepancy_sq(v, &audit.grad)),
        };
        let record = TraceRecord {
            step: opt.steps(),
            f_value: audit.f_value,
            grad_norm: audit.grad_norm,
            estimator_error_sq,
            gap: audit.gap,
            lambda_min: audit.lambda_min,
            accuracy: audit.accuracy,
            cum_grad_calls: opt.grad_calls(),
            cum_vectors_sent: opt.vectors_sent(),
            wall_time: options.record_wall_time.then(|| start.elapsed().as_secs_f64()),
        };
        Ok((audit, record))
    };

    let (mut audit, record) = audit_now(opt, &mut audits)?;
    trace.record(&record)?;
    let mut best = (opt.iterate().to_vec(), opt.steps(), audit.grad_norm);
    let mut fired = evaluate(stopping, &audit);

    while fired.is_none() && opt.steps() < stopping.max_steps {
        opt.step()?;
        let t = opt.steps();
        if !vector::is_finite(opt.iterate()) {
            return Err(Error::Divergence { step: t, inner: None });
        }
        if t % stopping.check_interval == 0 || t >= stopping.max_steps {
            let (a, record) = audit_now(opt, &mut audits)?;
            trace.record(&record)?;
            if a.grad_norm < best.2 {
                best = (opt.iterate().to_vec(), t, a.grad_norm);
            }
            fired = evaluate(stopping, &a);
            audit = a;
        }
    }

    Ok(RunResult {
        algorithm: opt.name().to_string(),
        final_iterate: opt.iterate().to_vec(),
        best_iterate: best.0,
        best_step: best.1,
        best_grad_norm: best.2,
        final_grad_norm: audit.grad_norm,
        final_value: audit.f_value,
        final_gap: audit.gap,
        final_accuracy: audit.accuracy,
        grad_calls: opt.grad_calls(),
        steps: opt.steps(),
        stop_reason: fired.unwrap_or(StopReason::MaxSteps),
        audit_grad_calls: audits * objective.gradient_cost(),
        vectors_sent: opt.vectors_sent(),
        ledger: opt.ledger(),
    })
}
