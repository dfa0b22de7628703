//! Experiment files and their expansion into a run matrix.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sledge_core::estimator::{InitOption, Mode};
use sledge_core::metrics::{Centralized, StoppingCriteria};
use sledge_core::problems::{BuiltProblem, ProblemDescriptor};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemDescriptor,
    #[serde(default)]
    pub x0: StartPoint,
    /// Entries of the form `{"algorithm": "sledge", "eta": 0.1, ..., "grid": {"eta": [...]}}`.
    #[serde(default)]
    pub algorithms: Vec<Map<String, Value>>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub stopping: Option<StoppingCriteria>,
    /// Relative paths resolve against the config file's directory.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub discrepancy: Option<DiscrepancySpec>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPoint {
    #[default]
    Zeros,
    Fill(f64),
    Values(Vec<f64>),
}

impl StartPoint {
    pub fn materialize(&self, d: usize) -> CliResult<Vec<f64>> {
        match self {
            StartPoint::Zeros => Ok(vec![0.0; d]),
            StartPoint::Fill(v) => Ok(vec![*v; d]),
            StartPoint::Values(v) if v.len() == d => Ok(v.clone()),
            StartPoint::Values(v) => Err(CliError::schema("x0", format!("has {} entries, problem dimension is {d}", v.len()))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepObjective {
    /// Median gradient calls until the stopping rule fires.
    #[default]
    GradCallsToEps,
    /// Median objective value at the end of the run.
    FinalValue,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub objective: SweepObjective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscrepancySpec {
    pub eta: f64,
    pub b: usize,
    /// SARAH epoch length.
    pub m: usize,
    pub steps: usize,
    #[serde(default = "full_option")]
    pub option: InitOption,
}

fn full_option() -> InitOption {
    InitOption::Full
}

fn efficient() -> Mode {
    Mode::Efficient
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SledgeParams {
    pub eta: f64,
    pub b: usize,
    #[serde(default)]
    pub r: f64,
    #[serde(default = "full_option")]
    pub option: InitOption,
    #[serde(default = "efficient")]
    pub mode: Mode,
}

/// Shared by SGD and SAGA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlainParams {
    pub eta: f64,
    pub b: usize,
}

/// With `r > 0` this is the perturbed variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SarahParams {
    pub eta: f64,
    pub b: usize,
    pub m: usize,
    #[serde(default)]
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FledgeParams {
    pub eta: f64,
    pub p: usize,
    pub b: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default)]
    pub r: f64,
    #[serde(default = "full_option")]
    pub option: InitOption,
    #[serde(default)]
    pub enlarged_minibatch: bool,
}

/// Hyperparameters of one run. The step budget comes from `stopping.max_steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum AlgorithmParams {
    Sledge(SledgeParams),
    Sgd(PlainParams),
    Saga(PlainParams),
    Sarah(SarahParams),
    Fledge(FledgeParams),
}

const ALGORITHMS: [&str; 5] = ["sledge", "sgd", "saga", "sarah", "fledge"];

impl AlgorithmParams {
    /// Deserializes the parameters of `algorithm`, reporting field paths.
    fn parse(algorithm: &str, params: Value) -> Result<Self, (String, String)> {
        fn typed<T: serde::de::DeserializeOwned>(v: Value) -> Result<T, (String, String)> {
            serde_path_to_error::deserialize(v).map_err(|e| {
                let path = e.path().to_string();
                let message = e.inner().to_string();
                (field_from(&path, &message), message)
            })
        }
        Ok(match algorithm {
            "sledge" => AlgorithmParams::Sledge(typed(params)?),
            "sgd" => AlgorithmParams::Sgd(typed(params)?),
            "saga" => AlgorithmParams::Saga(typed(params)?),
            "sarah" => AlgorithmParams::Sarah(typed(params)?),
            "fledge" => AlgorithmParams::Fledge(typed(params)?),
            other => {
                return Err(("algorithm".into(), format!("unknown algorithm {other:?}, expected one of {ALGORITHMS:?}")))
            }
        })
    }

    pub fn is_federated(&self) -> bool {
        matches!(self, AlgorithmParams::Fledge(_))
    }

    fn eta_r(&self) -> (f64, f64) {
        match self {
            AlgorithmParams::Sledge(p) => (p.eta, p.r),
            AlgorithmParams::Sarah(p) => (p.eta, p.r),
            AlgorithmParams::Fledge(p) => (p.eta, p.r),
            AlgorithmParams::Sgd(p) | AlgorithmParams::Saga(p) => (p.eta, 0.0),
        }
    }

    fn batch(&self) -> usize {
        match self {
            AlgorithmParams::Sledge(p) => p.b,
            AlgorithmParams::Sarah(p) => p.b,
            AlgorithmParams::Fledge(p) => p.b,
            AlgorithmParams::Sgd(p) | AlgorithmParams::Saga(p) => p.b,
        }
    }
}

/// Missing and unknown fields are reported at the struct itself; the field
/// name is then only in the message.
fn field_from(path: &str, message: &str) -> String {
    if path != "." {
        return path.to_string();
    }
    let ticked = || {
        let start = message.find('`')? + 1;
        let len = message[start..].find('`')?;
        Some(message[start..start + len].to_string())
    };
    match message {
        m if m.starts_with("missing field") || m.starts_with("unknown field") => ticked().unwrap_or_default(),
        _ => String::new(),
    }
}

/// One cell of the run matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    /// `label` plus the grid coordinates, e.g. `sledge-eta0.1`.
    pub tag: String,
    pub label: String,
    /// Index of the algorithm entry in the config.
    pub entry: usize,
    pub point: BTreeMap<String, Value>,
    pub params: AlgorithmParams,
    pub seed: u64,
}

/// A parsed, validated experiment with its problem built.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
    pub problem: BuiltProblem,
    pub x0: Vec<f64>,
    pub seeds: Vec<u64>,
    pub seed_offset: i64,
    pub runs: Vec<RunSpec>,
}

pub fn parse_config(text: &str) -> CliResult<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "config".to_string() } else { path };
        CliError::schema(path, e.into_inner())
    })
}

pub fn read_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text)
}

/// Reads, parses, builds and cross-checks an experiment. Nothing runs.
pub fn load(path: &Path, seed_offset: i64) -> CliResult<Experiment> {
    let config = read_config(path)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    prepare(config, base_dir, seed_offset)
}

pub fn prepare(config: ExperimentConfig, base_dir: PathBuf, seed_offset: i64) -> CliResult<Experiment> {
    let problem = config.problem.build(Some(&base_dir)).map_err(|e| CliError::schema("problem", e))?;
    let x0 = config.x0.materialize(problem.dim())?;
    let seeds = config
        .seeds
        .iter()
        .map(|&s| {
            s.checked_add_signed(seed_offset)
                .ok_or_else(|| CliError::schema("SLEDGE_OPT_SEED_OFFSET", format!("shifting seed {s} by {seed_offset} overflows")))
        })
        .collect::<CliResult<Vec<u64>>>()?;
    if seeds.iter().collect::<BTreeSet<_>>().len() != seeds.len() {
        return Err(CliError::schema("seeds", "contains duplicates"));
    }

    let mut runs = Vec::new();
    let mut labels = BTreeSet::new();
    for (i, entry) in config.algorithms.iter().enumerate() {
        let (label, points) = expand_entry(i, entry)?;
        if !labels.insert(label.clone()) {
            return Err(CliError::schema(format!("algorithms[{i}].label"), format!("duplicate label {label:?}")));
        }
        for (point, params) in points {
            check_params(i, &params, &problem)?;
            let tag = tag_for(&label, &point);
            for &seed in &seeds {
                runs.push(RunSpec { tag: tag.clone(), label: label.clone(), entry: i, point: point.clone(), params: params.clone(), seed });
            }
        }
    }

    if !config.algorithms.is_empty() {
        if seeds.is_empty() {
            return Err(CliError::schema("seeds", "at least one seed is needed to run algorithms"));
        }
        let Some(stopping) = &config.stopping else {
            return Err(CliError::schema("stopping", "required when algorithms are given"));
        };
        check_stopping(stopping, &problem)?;
    }
    if let Some(spec) = &config.discrepancy {
        check_discrepancy(spec, &problem)?;
        if seeds.is_empty() {
            return Err(CliError::schema("seeds", "at least one seed is needed for the discrepancy study"));
        }
    }
    Ok(Experiment { config, base_dir, problem, x0, seeds, seed_offset, runs })
}

type GridPoint = (BTreeMap<String, Value>, AlgorithmParams);

fn expand_entry(i: usize, entry: &Map<String, Value>) -> CliResult<(String, Vec<GridPoint>)> {
    let at = |field: &str| format!("algorithms[{i}].{field}");
    let algorithm = match entry.get("algorithm") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(CliError::schema(at("algorithm"), "must be a string")),
        None => return Err(CliError::schema(at("algorithm"), "missing field")),
    };
    let label = match entry.get("label") {
        None => algorithm.clone(),
        Some(Value::String(s)) if valid_label(s) => s.clone(),
        Some(_) => return Err(CliError::schema(at("label"), "must be a non-empty string of [A-Za-z0-9_.-]")),
    };
    let grid: BTreeMap<String, Vec<Value>> = match entry.get("grid") {
        None => BTreeMap::new(),
        Some(Value::Object(g)) => {
            let mut grid = BTreeMap::new();
            for (key, values) in g {
                let Value::Array(values) = values else {
                    return Err(CliError::schema(at(&format!("grid.{key}")), "must be an array"));
                };
                if values.is_empty() {
                    return Err(CliError::schema(at(&format!("grid.{key}")), "must not be empty"));
                }
                if matches!(key.as_str(), "algorithm" | "label" | "grid") || entry.contains_key(key) {
                    return Err(CliError::schema(at(&format!("grid.{key}")), "is also set outside the grid"));
                }
                grid.insert(key.clone(), values.clone());
            }
            grid
        }
        Some(_) => return Err(CliError::schema(at("grid"), "must be an object")),
    };

    let mut fixed = entry.clone();
    fixed.remove("algorithm");
    fixed.remove("label");
    fixed.remove("grid");
    let mut out = Vec::new();
    for point in cartesian(&grid) {
        let mut merged = fixed.clone();
        merged.extend(point.iter().map(|(k, v)| (k.clone(), v.clone())));
        let params = AlgorithmParams::parse(&algorithm, Value::Object(merged)).map_err(|(field, message)| {
            let name = if field.is_empty() { format!("algorithms[{i}]") } else { at(&field) };
            CliError::schema(name, message)
        })?;
        out.push((point, params));
    }
    Ok((label, out))
}

fn valid_label(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn cartesian(grid: &BTreeMap<String, Vec<Value>>) -> Vec<BTreeMap<String, Value>> {
    let mut points = vec![BTreeMap::new()];
    for (key, values) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.insert(key.clone(), v.clone());
                    q
                })
            })
            .collect();
    }
    points
}

fn tag_for(label: &str, point: &BTreeMap<String, Value>) -> String {
    let mut tag = label.to_string();
    for (k, v) in point {
        let v = match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        tag.push('-');
        tag.push_str(k);
        tag.push_str(&v.replace(['/', '\\', ' ', '"'], "_"));
    }
    tag
}

fn check_params(i: usize, params: &AlgorithmParams, problem: &BuiltProblem) -> CliResult<()> {
    let at = |field: &str| format!("algorithms[{i}].{field}");
    let (eta, r) = params.eta_r();
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(CliError::schema(at("eta"), format!("must be positive and finite, got {eta}")));
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(CliError::schema(at("r"), format!("must be non-negative, got {r}")));
    }
    let b = params.batch();
    if b == 0 {
        return Err(CliError::schema(at("b"), "must be at least 1"));
    }
    match (problem, params) {
        (BuiltProblem::Centralized(_), AlgorithmParams::Fledge { .. }) => {
            Err(CliError::schema(at("algorithm"), "fledge needs a federated problem"))
        }
        (BuiltProblem::Federated(_), p) if !p.is_federated() => {
            Err(CliError::schema(at("algorithm"), "centralized algorithms need a centralized problem"))
        }
        (BuiltProblem::Centralized(p), params) => {
            let n = p.num_components();
            if b > n {
                return Err(CliError::schema(at("b"), format!("b = {b} exceeds n = {n}")));
            }
            if let AlgorithmParams::Sarah(SarahParams { m: 0, .. }) = params {
                return Err(CliError::schema(at("m"), "must be at least 1"));
            }
            Ok(())
        }
        (BuiltProblem::Federated(fed), AlgorithmParams::Fledge(f)) => {
            let clients = fed.num_clients();
            if f.p == 0 || f.p > clients {
                return Err(CliError::schema(at("p"), format!("p = {} must lie in [1, P = {clients}]", f.p)));
            }
            if f.k == 0 {
                return Err(CliError::schema(at("K"), "must be at least 1"));
            }
            if f.enlarged_minibatch {
                return Err(CliError::schema(at("enlarged_minibatch"), "enlarged refresh minibatches are not implemented"));
            }
            Ok(())
        }
        (BuiltProblem::Federated(_), _) => unreachable!("centralized params handled above"),
    }
}

fn check_stopping(stopping: &StoppingCriteria, problem: &BuiltProblem) -> CliResult<()> {
    if stopping.max_steps == 0 {
        return Err(CliError::schema("stopping.max_steps", "must be at least 1"));
    }
    if stopping.check_interval == 0 {
        return Err(CliError::schema("stopping.check_interval", "must be at least 1"));
    }
    let checked = match problem {
        BuiltProblem::Centralized(p) => stopping.validate(&Centralized(p.as_ref())),
        BuiltProblem::Federated(f) => stopping.validate(f),
    };
    checked.map_err(|e| CliError::schema("stopping", e))
}

fn check_discrepancy(spec: &DiscrepancySpec, problem: &BuiltProblem) -> CliResult<()> {
    let BuiltProblem::Centralized(p) = problem else {
        return Err(CliError::schema("discrepancy", "needs a centralized problem"));
    };
    let n = p.num_components();
    if spec.b == 0 || spec.b > n {
        return Err(CliError::schema("discrepancy.b", format!("b = {} must lie in [1, n = {n}]", spec.b)));
    }
    if spec.m == 0 {
        return Err(CliError::schema("discrepancy.m", "must be at least 1"));
    }
    if spec.steps == 0 {
        return Err(CliError::schema("discrepancy.steps", "must be at least 1"));
    }
    if !(spec.eta > 0.0 && spec.eta.is_finite()) {
        return Err(CliError::schema("discrepancy.eta", format!("must be positive and finite, got {}", spec.eta)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Value {
        serde_json::json!({
            "problem": {"kind": "quadratic_pl", "d": 3, "mu": 0.1, "L": 1.0, "n": 8, "zeta": 0.2},
            "seeds": [0, 1],
            "stopping": {"max_steps": 10},
            "algorithms": []
        })
    }

    fn prepared(v: Value) -> CliResult<Experiment> {
        prepare(serde_json::from_value(v).unwrap(), PathBuf::new(), 0)
    }

    #[test]
    fn grid_expands_in_key_order() {
        let mut v = base();
        v["algorithms"] = serde_json::json!([{"algorithm": "sarah", "m": 4, "grid": {"eta": [0.1, 0.3], "b": [2, 4]}}]);
        let e = prepared(v).unwrap();
        let tags: Vec<&str> = e.runs.iter().step_by(2).map(|r| r.tag.as_str()).collect();
        assert_eq!(tags, ["sarah-b2-eta0.1", "sarah-b2-eta0.3", "sarah-b4-eta0.1", "sarah-b4-eta0.3"]);
        assert_eq!(e.runs.len(), 8);
    }

    #[test]
    fn unknown_top_level_key_is_named() {
        let mut v = base();
        v["stoping"] = Value::Null;
        let err = parse_config(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("stoping"), "{err}");
    }

    #[test]
    fn missing_parameter_is_named() {
        let mut v = base();
        v["algorithms"] = serde_json::json!([{"algorithm": "sledge", "eta": 0.1}]);
        match prepared(v) {
            Err(CliError::Schema { path, .. }) => assert_eq!(path, "algorithms[0].b"),
            other => panic!("{:?}", other.err()),
        }
    }

    #[test]
    fn unknown_parameter_is_named() {
        let mut v = base();
        v["algorithms"] = serde_json::json!([{"algorithm": "sgd", "eta": 0.1, "b": 2, "m": 3}]);
        match prepared(v) {
            Err(CliError::Schema { path, .. }) => assert_eq!(path, "algorithms[0].m"),
            other => panic!("{:?}", other.err()),
        }
    }

    #[test]
    fn seed_offset_shifts_and_overflows() {
        let e = prepare(serde_json::from_value(base()).unwrap(), PathBuf::new(), 5).unwrap();
        assert_eq!(e.seeds, [5, 6]);
        assert!(prepare(serde_json::from_value(base()).unwrap(), PathBuf::new(), -1).is_err());
    }
}
