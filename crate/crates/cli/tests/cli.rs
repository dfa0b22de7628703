use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use sledge_opt::summary::{RunStatus, Summary};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sledge-opt"));
    c.env_remove("SLEDGE_OPT_SEED_OFFSET");
    c
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg(cmd).arg(config).arg("--out").arg(out).args(extra).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary(out: &Path) -> Summary {
    Summary::from_json(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn quadratic(algorithms: Value, seeds: Value) -> Value {
    json!({
        "problem": {"kind": "quadratic_pl", "d": 5, "mu": 0.1, "L": 1.0, "n": 16, "zeta": 0.3, "seed": 3},
        "x0": {"fill": 1.0},
        "algorithms": algorithms,
        "seeds": seeds,
        "stopping": {"eps": 1e-6, "max_steps": 400, "check_interval": 5}
    })
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn empty_algorithm_list_gives_empty_runs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &quadratic(json!([]), json!([0])));
    let out = tmp.path().join("out");
    let o = run("run", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = summary(&out);
    assert!(s.runs.is_empty() && s.groups.is_empty());
    assert_eq!(s.command, "run");
}

#[test]
fn seed_order_does_not_change_outputs() {
    let tmp = TempDir::new().unwrap();
    let algs = json!([
        {"algorithm": "sledge", "eta": 0.3, "b": 4, "r": 0.001},
        {"algorithm": "saga", "eta": 0.2, "b": 4}
    ]);
    let a = write_config(tmp.path(), "a.json", &quadratic(algs.clone(), json!([0, 1, 2])));
    let b = write_config(tmp.path(), "b.json", &quadratic(algs, json!([2, 0, 1])));
    let (oa, ob) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run("run", &a, &oa, &[]).status.success());
    assert!(run("run", &b, &ob, &["--jobs", "3"]).status.success());
    let files = csv_files(&oa);
    assert_eq!(files.len(), 6);
    assert!(files.iter().any(|(n, _)| n == "sledge_2.csv"));
    assert_eq!(files, csv_files(&ob));
    assert_eq!(fs::read(oa.join("summary.json")).unwrap(), fs::read(ob.join("summary.json")).unwrap());
}

#[test]
fn shipped_configs_validate() {
    for name in ["logistic_sweep.json", "saddle.json", "federated.json", "discrepancy.json"] {
        let o = bin().arg("validate").arg(shipped(name)).output().unwrap();
        assert!(o.status.success(), "{name}: {}", stderr(&o));
    }
}

#[test]
fn shipped_logistic_config_uses_tuning_grid() {
    let cfg: Value = serde_json::from_str(&fs::read_to_string(shipped("logistic_sweep.json")).unwrap()).unwrap();
    let grid = [1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001];
    for alg in cfg["algorithms"].as_array().unwrap() {
        let etas: Vec<f64> = alg["grid"]["eta"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert_eq!(etas, grid);
        assert_eq!(alg["b"], 12);
    }
    let sarah = cfg["algorithms"].as_array().unwrap().iter().find(|a| a["algorithm"] == "sarah").unwrap();
    assert_eq!(sarah["m"], 10);
    let exp = sledge_opt::load(&shipped("logistic_sweep.json"), 0).unwrap();
    let sledge_core::problems::BuiltProblem::Centralized(p) = &exp.problem else { panic!("centralized expected") };
    assert_eq!(p.num_components(), 130);
}

#[test]
fn batch_larger_than_n_is_rejected_by_name() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &quadratic(json!([{"algorithm": "sgd", "eta": 0.1, "b": 17}]), json!([0])));
    let o = bin().arg("validate").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("algorithms[0].b"), "{}", stderr(&o));
}

#[test]
fn too_many_sampled_clients_is_rejected_by_name() {
    let tmp = TempDir::new().unwrap();
    let v = json!({
        "problem": {"kind": "federated_quadratic", "P": 4, "components_per_client": 3, "d": 2,
                    "mu": 0.2, "L": 1.0, "zeta": 0.5, "sigma": 0.1},
        "algorithms": [{"algorithm": "fledge", "eta": 0.1, "b": 2, "K": 2, "p": 5}],
        "seeds": [0],
        "stopping": {"max_steps": 5}
    });
    let o = bin().arg("validate").arg(write_config(tmp.path(), "c.json", &v)).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("algorithms[0].p"), "{}", stderr(&o));
}

#[test]
fn schema_errors_name_the_field() {
    let tmp = TempDir::new().unwrap();
    let mut v = quadratic(json!([]), json!([0]));
    v["stopping"]["max_step"] = json!(3);
    let o = bin().arg("validate").arg(write_config(tmp.path(), "a.json", &v)).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stopping") && stderr(&o).contains("max_step"), "{}", stderr(&o));

    let v = quadratic(json!([{"algorithm": "sarah", "eta": 0.1, "b": 2}]), json!([0]));
    let o = bin().arg("validate").arg(write_config(tmp.path(), "b.json", &v)).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("algorithms[0].m"), "{}", stderr(&o));

    let v = quadratic(json!([{"algorithm": "sledge", "eta": "fast", "b": 2}]), json!([0]));
    let o = bin().arg("validate").arg(write_config(tmp.path(), "c.json", &v)).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("algorithms[0].eta"), "{}", stderr(&o));
}

#[test]
fn missing_config_is_an_io_error() {
    let o = bin().arg("run").arg("/nonexistent/config.json").output().unwrap();
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn seed_offset_shifts_file_names_and_rejects_garbage() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &quadratic(json!([{"algorithm": "sgd", "eta": 0.1, "b": 4}]), json!([0, 1])));
    let out = tmp.path().join("out");
    let o = bin().env("SLEDGE_OPT_SEED_OFFSET", "100").arg("run").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let names: Vec<String> = csv_files(&out).into_iter().map(|f| f.0).collect();
    assert_eq!(names, ["sgd_100.csv", "sgd_101.csv"]);
    assert_eq!(summary(&out).seed_offset, 100);

    let o = bin().env("SLEDGE_OPT_SEED_OFFSET", "lots").arg("validate").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("SLEDGE_OPT_SEED_OFFSET"));
}

#[test]
fn sweep_flags_divergent_step_sizes() {
    // Curvature up to 5: step sizes above 0.4 blow up.
    let tmp = TempDir::new().unwrap();
    let v = json!({
        "problem": {"kind": "quadratic_pl", "d": 4, "mu": 0.5, "L": 5.0, "n": 10, "zeta": 0.5, "seed": 1},
        "x0": {"fill": 1.0},
        "algorithms": [{"algorithm": "sledge", "b": 10, "grid": {"eta": [1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001]}}],
        "seeds": [0, 1],
        "stopping": {"eps": 1e-8, "max_steps": 3000, "check_interval": 1}
    });
    let cfg = write_config(tmp.path(), "c.json", &v);
    let out = tmp.path().join("out");
    let o = run("sweep", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = summary(&out);
    let diverged: Vec<&str> =
        s.runs.iter().filter(|r| r.status == RunStatus::Diverged).map(|r| r.tag.as_str()).collect();
    assert_eq!(diverged, ["sledge-eta1.0", "sledge-eta1.0"]);
    let best = &s.sweep.as_ref().unwrap().best[0];
    assert_eq!(best.flagged, ["sledge-eta1.0"]);
    assert_eq!(best.tag.as_deref(), Some("sledge-eta0.3"));
    // The trace of a divergent run is kept up to the blow-up.
    assert!(fs::read_to_string(out.join("sledge-eta1.0_0.csv")).unwrap().lines().count() > 2);
}

#[test]
fn single_point_sweep_matches_run() {
    let tmp = TempDir::new().unwrap();
    let mut v = quadratic(json!([{"algorithm": "sarah", "b": 4, "m": 3, "grid": {"eta": [0.2]}}]), json!([4, 5]));
    v["sweep"] = json!({"objective": "final_value"});
    let cfg = write_config(tmp.path(), "c.json", &v);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run("run", &cfg, &a, &[]).status.success());
    assert!(run("sweep", &cfg, &b, &[]).status.success());
    assert_eq!(csv_files(&a), csv_files(&b));
    let (ra, rb) = (summary(&a), summary(&b));
    assert_eq!(ra.runs, rb.runs);
    assert_eq!(rb.sweep.unwrap().best[0].tag.as_deref(), Some("sarah-eta0.2"));
}

#[test]
fn summary_round_trips() {
    let tmp = TempDir::new().unwrap();
    let algs = json!([
        {"algorithm": "sledge", "eta": 0.3, "b": 4, "option": "I"},
        {"algorithm": "sarah", "label": "ssrgd", "eta": 0.3, "b": 4, "m": 4, "r": 0.01},
        {"algorithm": "sgd", "eta": 0.1, "b": 4}
    ]);
    let cfg = write_config(tmp.path(), "c.json", &quadratic(algs, json!([0, 1, 2])));
    let out = tmp.path().join("out");
    assert!(run("sweep", &cfg, &out, &[]).status.success());
    let text = fs::read_to_string(out.join("summary.json")).unwrap();
    let s = Summary::from_json(&text).unwrap();
    assert_eq!(s.to_json(), text);
    assert_eq!(s.runs.len(), 9);
    assert_eq!(s.runs.iter().find(|r| r.label == "ssrgd").unwrap().algorithm, "ssrgd");
    // Medians in the summary agree with the per-run numbers.
    for g in &s.groups {
        let mut calls: Vec<f64> =
            s.runs.iter().filter(|r| r.tag == g.tag).map(|r| r.grad_calls.unwrap() as f64).collect();
        calls.sort_by(f64::total_cmp);
        if g.median_grad_calls_to_eps.is_some() {
            assert_eq!(g.median_grad_calls_to_eps, Some(calls[1]));
        }
    }

    let mut bad: Value = serde_json::from_str(&text).unwrap();
    bad["runs"][0]["sneaky"] = json!(1);
    assert!(Summary::from_json(&bad.to_string()).is_err());
}

#[test]
fn federated_run_writes_ledger() {
    let tmp = TempDir::new().unwrap();
    let (clients, k, b, p, rounds) = (6u64, 3u64, 2u64, 2u64, 15u64);
    let v = json!({
        "problem": {"kind": "federated_quadratic", "P": clients, "components_per_client": 4, "d": 3,
                    "mu": 0.2, "L": 1.0, "zeta": 0.5, "sigma": 0.2, "seed": 2},
        "algorithms": [{"algorithm": "fledge", "eta": 0.05, "b": b, "K": k, "p": p}],
        "seeds": [0],
        "stopping": {"max_steps": rounds, "check_interval": 5}
    });
    let cfg = write_config(tmp.path(), "c.json", &v);
    let out = tmp.path().join("out");
    let o = run("run", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = summary(&out);
    let ledger = s.runs[0].ledger.as_ref().unwrap();
    assert_eq!(ledger.grad_calls, clients * k * b + rounds * (2 * k * b + 2 * p * k * b));
    assert_eq!(ledger.vectors_sent, 2 * clients + rounds * (3 * p + 2));
    let per_round: Value = serde_json::from_str(&fs::read_to_string(out.join(&ledger.file)).unwrap()).unwrap();
    assert_eq!(per_round["per_round"].as_array().unwrap().len() as u64, rounds + 1);
}

fn recompute_medians(out: &Path, files: &std::collections::BTreeMap<String, String>) -> Vec<(String, f64)> {
    files
        .iter()
        .map(|(alg, file)| {
            let text = fs::read_to_string(out.join(file)).unwrap();
            let mut values: Vec<f64> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
            values.sort_by(f64::total_cmp);
            let mid = values.len() / 2;
            let m = if values.len() % 2 == 1 { values[mid] } else { 0.5 * (values[mid - 1] + values[mid]) };
            (alg.clone(), m)
        })
        .collect()
}

#[test]
fn discrepancy_medians_match_csvs() {
    let tmp = TempDir::new().unwrap();
    let mut v = quadratic(json!([]), json!([0, 1, 2]));
    v.as_object_mut().unwrap().remove("stopping");
    v["discrepancy"] = json!({"eta": 0.2, "b": 3, "m": 4, "steps": 60});
    let cfg = write_config(tmp.path(), "c.json", &v);
    let out = tmp.path().join("out");
    let o = run("discrepancy", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let d = summary(&out).discrepancy.unwrap();
    for (alg, m) in recompute_medians(&out, &d.files) {
        assert_eq!(d.medians[&alg], m, "{alg}");
    }
    let table = fs::read_to_string(out.join(&d.medians_file)).unwrap();
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn homogeneous_discrepancy_vanishes() {
    let tmp = TempDir::new().unwrap();
    let v = json!({
        "problem": {"kind": "quadratic_pl", "d": 5, "mu": 0.1, "L": 1.0, "n": 16, "zeta": 0.0, "seed": 3},
        "x0": {"fill": 1.0},
        "seeds": [0, 1],
        "discrepancy": {"eta": 0.2, "b": 3, "m": 4, "steps": 80}
    });
    let cfg = write_config(tmp.path(), "c.json", &v);
    let out = tmp.path().join("out");
    assert!(run("discrepancy", &cfg, &out, &[]).status.success());
    let d = summary(&out).discrepancy.unwrap();
    assert!(d.medians["sledge"] <= 1e-20, "{}", d.medians["sledge"]);
    assert!(d.medians["saga"] > 1e-6);
}

#[test]
fn shipped_discrepancy_config_orders_sledge_below_saga() {
    let tmp = TempDir::new().unwrap();
    let mut v: Value = serde_json::from_str(&fs::read_to_string(shipped("discrepancy.json")).unwrap()).unwrap();
    v["discrepancy"]["steps"] = json!(300);
    v["seeds"] = json!([0, 1, 2]);
    let cfg = write_config(tmp.path(), "c.json", &v);
    let out = tmp.path().join("out");
    assert!(run("discrepancy", &cfg, &out, &[]).status.success());
    let d = summary(&out).discrepancy.unwrap();
    assert!(d.medians["sledge"] < d.medians["saga"], "{:?}", d.medians);
}

#[test]
fn saddle_escape_counts_are_reproducible() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run("run", &shipped("saddle.json"), &a, &[]).status.success());
    assert!(run("run", &shipped("saddle.json"), &b, &["--jobs", "2"]).status.success());
    let (sa, sb) = (summary(&a), summary(&b));
    assert_eq!(sa.groups, sb.groups);
    let perturbed = sa.groups.iter().find(|g| g.label == "perturbed").unwrap();
    let escaped = perturbed.stop_reasons.get("value_gap").copied().unwrap_or(0);
    assert!(escaped >= 18, "{escaped}/20 escaped");
    let quiet = sa.groups.iter().find(|g| g.label == "unperturbed").unwrap();
    assert_eq!(quiet.stop_reasons.get("max_steps"), Some(&20));
    assert!(sa.runs.iter().filter(|r| r.label == "unperturbed").all(|r| r.final_value == Some(0.0)));
}
