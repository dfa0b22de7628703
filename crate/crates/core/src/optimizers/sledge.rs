use crate::estimator::{init_estimator, sledge_step, EstimatorState, Mode, SledgeConfig};
use crate::metrics::{Centralized, StoppingCriteria, TraceSink};
use crate::problems::FiniteSumProblem;
use crate::Result;

use super::{drive, DriveOptions, Estimate, Optimizer, RunResult};

/// The estimator table wrapped as an [`Optimizer`].
pub struct Sledge<'a, P: ?Sized> {
    problem: &'a P,
    config: SledgeConfig,
    state: EstimatorState,
}

impl<'a, P: FiniteSumProblem + ?Sized> Sledge<'a, P> {
    pub fn new(problem: &'a P, x0: &[f64], config: SledgeConfig, mode: Mode) -> Result<Self> {
        let state = init_estimator(problem, x0, &config, mode)?;
        Ok(Self { problem, config, state })
    }

    pub fn state(&self) -> &EstimatorState {
        &self.state
    }
}

impl<P: FiniteSumProblem + ?Sized> Optimizer for Sledge<'_, P> {
    fn name(&self) -> &'static str {
        "sledge"
    }
    fn iterate(&self) -> &[f64] {
        self.state.iterate()
    }
    fn grad_calls(&self) -> u64 {
        self.state.grad_calls()
    }
    fn steps(&self) -> usize {
        self.state.step()
    }
    fn step(&mut self) -> Result<()> {
        sledge_step(&mut self.state, self.problem, &self.config).map(|_| ())
    }
    fn estimate(&self) -> Estimate<'_> {
        Estimate::At(self.state.aggregate())
    }
}

/// Efficient-mode run; the step budget is the smaller of `config.steps`
/// and `stopping.max_steps`.
pub fn run_sledge<P, S>(
    problem: &P,
    x0: &[f64],
    config: &SledgeConfig,
    stopping: &StoppingCriteria,
    trace: &mut S,
) -> Result<RunResult>
where
    P: FiniteSumProblem,
    S: TraceSink + ?Sized,
{
    run_sledge_with(problem, x0, config, Mode::Efficient, stopping, trace, DriveOptions::default())
}

pub fn run_sledge_with<P, S>(
    problem: &P,
    x0: &[f64],
    config: &SledgeConfig,
    mode: Mode,
    stopping: &StoppingCriteria,
    trace: &mut S,
    options: DriveOptions,
) -> Result<RunResult>
where
    P: FiniteSumProblem,
    S: TraceSink + ?Sized,
{
    let mut opt = Sledge::new(problem, x0, config.clone(), mode)?;
    let mut stopping = stopping.clone();
    stopping.max_steps = stopping.max_steps.min(config.steps);
    drive(&mut opt, &Centralized(problem), &stopping, trace, options)
}
