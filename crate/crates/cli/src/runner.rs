//! Executes run matrices and the discrepancy study.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sledge_core::estimator::SledgeConfig;
use sledge_core::fledge::{run_fledge_with, FledgeConfig};
use sledge_core::metrics::{Centralized, CsvTrace, StoppingCriteria};
use sledge_core::optimizers::{
    compare_estimator_discrepancy, drive, DiscrepancyConfig, DiscrepancyReport, DriveOptions, RunResult, Saga, Sarah,
    Sgd, Sledge,
};
use sledge_core::problems::BuiltProblem;
use sledge_core::{Error, FiniteSumProblem};

use crate::config::{AlgorithmParams, Experiment, RunSpec};
use crate::error::{CliError, CliResult};
use crate::summary::{
    best_settings, group_runs, DiscrepancySummary, LedgerTotals, RunStatus, RunSummary, Summary, SweepSummary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Sweep,
    Discrepancy,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Sweep => "sweep",
            Command::Discrepancy => "discrepancy",
        }
    }
}

/// Where outputs go: `--out` if given, else the config's `output_dir`
/// relative to the config file.
pub fn output_dir(exp: &Experiment, cli_out: Option<&Path>) -> PathBuf {
    match cli_out {
        Some(p) => p.to_path_buf(),
        None if exp.config.output_dir.is_relative() => exp.base_dir.join(&exp.config.output_dir),
        None => exp.config.output_dir.clone(),
    }
}

/// Runs `command` with `jobs` worker threads and writes every output file.
pub fn execute(exp: &Experiment, command: Command, out: &Path, jobs: usize) -> CliResult<Summary> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::schema("--jobs", e))?;
    let summary = pool.install(|| match command {
        Command::Run | Command::Sweep => run_matrix(exp, command, out),
        Command::Discrepancy => discrepancy(exp, out),
    })?;
    write_file(&out.join("summary.json"), summary.to_json().as_bytes())?;
    Ok(summary)
}

fn run_matrix(exp: &Experiment, command: Command, out: &Path) -> CliResult<Summary> {
    let mut runs = exp
        .runs
        .par_iter()
        .map(|spec| {
            let summary = run_one(exp, spec, out)?;
            eprintln!("{} seed {}: {:?}", spec.tag, spec.seed, summary.status);
            Ok(summary)
        })
        .collect::<CliResult<Vec<RunSummary>>>()?;
    runs.sort_by(|a, b| (&a.tag, a.seed).cmp(&(&b.tag, b.seed)));

    let points: BTreeMap<_, _> = exp.runs.iter().map(|r| (r.tag.clone(), r.point.clone())).collect();
    let groups = group_runs(&runs, &points);
    let sweep = (command == Command::Sweep).then(|| {
        let mut labels: Vec<String> = Vec::new();
        for r in &exp.runs {
            if !labels.contains(&r.label) {
                labels.push(r.label.clone());
            }
        }
        let objective = exp.config.sweep.objective;
        SweepSummary { objective, best: best_settings(&groups, &labels, objective) }
    });
    Ok(Summary { command: command.name().into(), seed_offset: exp.seed_offset, runs, groups, sweep, discrepancy: None })
}

fn stopping(exp: &Experiment) -> &StoppingCriteria {
    exp.config.stopping.as_ref().expect("validated: stopping present when runs exist")
}

fn run_one(exp: &Experiment, spec: &RunSpec, out: &Path) -> CliResult<RunSummary> {
    let trace_name = format!("{}_{}.csv", spec.tag, spec.seed);
    let trace_path = out.join(&trace_name);
    let file = File::create(&trace_path).map_err(|e| CliError::io(&trace_path, e))?;
    let mut sink = CsvTrace::new(BufWriter::new(file));
    let options = DriveOptions { record_wall_time: exp.config.record_wall_time };
    let result = dispatch(&exp.problem, &exp.x0, &spec.params, spec.seed, stopping(exp), options, &mut sink);
    let mut writer = sink.into_inner().map_err(|e| flatten_io(&trace_path, e))?;
    writer.flush().map_err(|e| CliError::io(&trace_path, e))?;

    let mut summary = RunSummary {
        tag: spec.tag.clone(),
        label: spec.label.clone(),
        algorithm: algorithm_name(&spec.params).into(),
        params: spec.params.clone(),
        seed: spec.seed,
        status: RunStatus::Completed,
        trace: trace_name,
        steps: None,
        grad_calls: None,
        audit_grad_calls: None,
        vectors_sent: None,
        ledger: None,
        stop_reason: None,
        final_grad_norm: None,
        best_grad_norm: None,
        best_step: None,
        final_value: None,
        final_gap: None,
        final_accuracy: None,
        error: None,
    };
    match result {
        Ok(res) => {
            if let Some(ledger) = &res.ledger {
                let name = format!("{}_{}_ledger.json", spec.tag, spec.seed);
                let path = out.join(&name);
                let json = ledger.to_json().map_err(|e| flatten_io(&path, e))?;
                write_file(&path, json.as_bytes())?;
                summary.ledger = Some(LedgerTotals {
                    rounds: ledger.rounds,
                    vectors_sent: ledger.vectors_sent,
                    grad_calls: ledger.grad_calls,
                    file: name,
                });
            }
            fill(&mut summary, &res);
        }
        Err(Error::Divergence { step, inner }) => {
            summary.status = RunStatus::Diverged;
            summary.steps = Some(step);
            summary.error = Some(Error::Divergence { step, inner }.to_string());
        }
        Err(Error::Io(e)) => return Err(CliError::io(&trace_path, e)),
        Err(e) => {
            summary.status = RunStatus::Failed;
            summary.error = Some(e.to_string());
        }
    }
    Ok(summary)
}

fn fill(summary: &mut RunSummary, res: &RunResult) {
    let finite = |v: f64| v.is_finite().then_some(v);
    summary.algorithm = res.algorithm.clone();
    summary.steps = Some(res.steps);
    summary.grad_calls = Some(res.grad_calls);
    summary.audit_grad_calls = Some(res.audit_grad_calls);
    summary.vectors_sent = res.vectors_sent;
    summary.stop_reason = Some(res.stop_reason);
    summary.final_grad_norm = finite(res.final_grad_norm);
    summary.best_grad_norm = finite(res.best_grad_norm);
    summary.best_step = Some(res.best_step);
    summary.final_value = finite(res.final_value);
    summary.final_gap = res.final_gap.and_then(finite);
    summary.final_accuracy = res.final_accuracy.and_then(finite);
}

fn algorithm_name(params: &AlgorithmParams) -> &'static str {
    match params {
        AlgorithmParams::Sledge(_) => "sledge",
        AlgorithmParams::Sgd(_) => "sgd",
        AlgorithmParams::Saga(_) => "saga",
        AlgorithmParams::Sarah(p) if p.r > 0.0 => "ssrgd",
        AlgorithmParams::Sarah(_) => "sarah",
        AlgorithmParams::Fledge(_) => "fledge",
    }
}

fn dispatch(
    problem: &BuiltProblem,
    x0: &[f64],
    params: &AlgorithmParams,
    seed: u64,
    stopping: &StoppingCriteria,
    options: DriveOptions,
    sink: &mut CsvTrace<BufWriter<File>>,
) -> sledge_core::Result<RunResult> {
    let steps = stopping.max_steps;
    match (problem, params) {
        (BuiltProblem::Centralized(p), params) => {
            let p: &dyn FiniteSumProblem = p.as_ref();
            let objective = Centralized(p);
            match params {
                AlgorithmParams::Sledge(s) => {
                    let config = SledgeConfig { eta: s.eta, b: s.b, steps, r: s.r, option: s.option, seed };
                    drive(&mut Sledge::new(p, x0, config, s.mode)?, &objective, stopping, sink, options)
                }
                AlgorithmParams::Sgd(s) => drive(&mut Sgd::new(p, x0, s.eta, s.b, seed)?, &objective, stopping, sink, options),
                AlgorithmParams::Saga(s) => drive(&mut Saga::new(p, x0, s.eta, s.b, seed)?, &objective, stopping, sink, options),
                AlgorithmParams::Sarah(s) => {
                    drive(&mut Sarah::new(p, x0, s.eta, s.b, s.m, s.r, seed)?, &objective, stopping, sink, options)
                }
                AlgorithmParams::Fledge(_) => Err(Error::Config("fledge needs a federated problem".into())),
            }
        }
        (BuiltProblem::Federated(fed), AlgorithmParams::Fledge(f)) => {
            let config = FledgeConfig {
                eta: f.eta,
                p: f.p,
                b: f.b,
                k: f.k,
                rounds: steps,
                r: f.r,
                option: f.option,
                seed,
                enlarged_minibatch: f.enlarged_minibatch,
            };
            run_fledge_with(fed, x0, &config, sledge_core::estimator::Mode::Efficient, stopping, sink, options)
        }
        (BuiltProblem::Federated(_), _) => Err(Error::Config("centralized algorithms need a centralized problem".into())),
    }
}

fn discrepancy(exp: &Experiment, out: &Path) -> CliResult<Summary> {
    let Some(spec) = &exp.config.discrepancy else {
        return Err(CliError::schema("discrepancy", "section required for the discrepancy command"));
    };
    let BuiltProblem::Centralized(p) = &exp.problem else {
        return Err(CliError::schema("discrepancy", "needs a centralized problem"));
    };
    let config = DiscrepancyConfig {
        eta: spec.eta,
        b: spec.b,
        m: spec.m,
        steps: spec.steps,
        seeds: exp.seeds.clone(),
        option: spec.option,
    };
    let report = compare_estimator_discrepancy(p.as_ref(), &exp.x0, &config).map_err(|e| match e {
        Error::Io(e) => CliError::io(out, e),
        e => CliError::schema("discrepancy", e),
    })?;

    let mut files = BTreeMap::new();
    for algorithm in report.medians.keys() {
        let name = format!("discrepancy_{algorithm}.csv");
        let path = out.join(&name);
        let single = DiscrepancyReport {
            series: report.series.iter().filter(|s| &s.algorithm == algorithm).cloned().collect(),
            medians: BTreeMap::new(),
        };
        let bytes = single.write_csv(Vec::new()).map_err(|e| flatten_io(&path, e))?;
        write_file(&path, &bytes)?;
        files.insert(algorithm.clone(), name);
    }
    let mut table = String::from("algorithm,median_discrepancy_sq,seeds,steps\n");
    for (algorithm, m) in &report.medians {
        table.push_str(&format!("{algorithm},{m},{},{}\n", exp.seeds.len(), spec.steps));
    }
    let medians_file = "discrepancy_medians.csv".to_string();
    write_file(&out.join(&medians_file), table.as_bytes())?;

    Ok(Summary {
        command: Command::Discrepancy.name().into(),
        seed_offset: exp.seed_offset,
        runs: Vec::new(),
        groups: Vec::new(),
        sweep: None,
        discrepancy: Some(DiscrepancySummary { medians: report.medians.clone(), files, medians_file }),
    })
}

fn flatten_io(path: &Path, e: Error) -> CliError {
    match e {
        Error::Io(e) => CliError::io(path, e),
        other => CliError::io(path, std::io::Error::other(other.to_string())),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
