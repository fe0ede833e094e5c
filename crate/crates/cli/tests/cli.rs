use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_acco-sim"))
}

fn quadratic_config(method: &str, k: u32) -> Value {
    json!({
        "method_name": method,
        "problem": { "kind": "quadratic", "dim": 6, "mu": 0.2, "smoothness": 1.0, "seed": 3 },
        "optimizer": { "name": "sgd", "learning_rate": 0.5 },
        "n_workers": 2,
        "batch_size": 4,
        "n_grad_accumulation": k,
        "T_updates": 20,
        "full_batch": true,
        "cost_model": { "alpha_s": 0.5 },
        "heterogeneity": { "compute_s_per_microbatch": 1.0 },
        "master_seed": 11
    })
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn run(cfg: &Path, out: &Path) -> Output {
    bin().args(["run", "--config"]).arg(cfg).arg("--out").arg(out).output().unwrap()
}

fn csv_column(path: &Path, name: &str) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn run_writes_metrics_timeline_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &quadratic_config("acco", 1));
    let out = tmp.path().join("out");
    let res = run(&cfg, &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 21);
    assert!(metrics.lines().skip(1).all(|l| l.split(',').count() == 8));
    assert!(out.join("timeline.csv").exists());

    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 11);
    assert_eq!(manifest["status"]["state"], "completed");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["config"]["method_name"], "acco");
}

#[test]
fn manifest_config_reruns_bit_identically() {
    let tmp = TempDir::new().unwrap();
    let cfg = quadratic_config("dpu", 2);
    let first = tmp.path().join("a");
    assert!(run(&write_config(tmp.path(), "c.json", &cfg), &first).status.success());

    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(first.join("manifest.json")).unwrap()).unwrap();
    let replay = write_config(tmp.path(), "replay.json", &manifest["config"]);
    let second = tmp.path().join("b");
    assert!(run(&replay, &second).status.success());
    for file in ["metrics.csv", "timeline.csv", "manifest.json"] {
        assert_eq!(std::fs::read(first.join(file)).unwrap(), std::fs::read(second.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn acco_and_ddp_losses_match_on_deterministic_quadratic() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("acco");
    let d = tmp.path().join("ddp");
    assert!(run(&write_config(tmp.path(), "a.json", &quadratic_config("acco", 1)), &a).status.success());
    assert!(run(&write_config(tmp.path(), "d.json", &quadratic_config("ddp", 2)), &d).status.success());
    let la = csv_column(&a.join("metrics.csv"), "train_loss");
    let ld = csv_column(&d.join("metrics.csv"), "train_loss");
    assert_eq!(la.len(), ld.len());
    for (x, y) in la.iter().zip(&ld) {
        assert!((x - y).abs() <= 1e-12);
    }
}

#[test]
fn heterogeneous_run_throughput_ratio() {
    let tmp = TempDir::new().unwrap();
    let mut ratio = Vec::new();
    for method in ["acco", "ddp"] {
        let cfg = json!({
            "method_name": method,
            "problem": { "kind": "quadratic", "dim": 4, "noise": 0.1, "seed": 1 },
            "optimizer": { "name": "adamw", "learning_rate": 0.01, "weight_decay": 0.01 },
            "n_workers": 4,
            "batch_size": 8,
            "T_updates": 40,
            "heterogeneity": { "compute_s_per_microbatch": 1.0, "worker_multipliers": [1.0, 1.0, 1.0, 4.0] }
        });
        let out = tmp.path().join(method);
        let res = run(&write_config(tmp.path(), &format!("{method}.json"), &cfg), &out);
        assert!(res.status.success());
        let summary: Value = serde_json::from_slice(&res.stdout).unwrap();
        ratio.push(summary["samples_per_second"].as_f64().unwrap());
    }
    assert!((ratio[0] / ratio[1] - 3.25).abs() <= 0.05, "{ratio:?}");
}

#[test]
fn invalid_configs_exit_with_code_2() {
    let tmp = TempDir::new().unwrap();
    let mut zero = quadratic_config("ddp", 1);
    zero["T_updates"] = json!(0);
    let mut unknown_key = quadratic_config("ddp", 1);
    unknown_key["learning_rate"] = json!(0.1);
    let mut bad_method = quadratic_config("ddp", 1);
    bad_method["method_name"] = json!("diloco");
    for (i, cfg) in [zero, unknown_key, bad_method].iter().enumerate() {
        let res = run(&write_config(tmp.path(), &format!("{i}.json"), cfg), &tmp.path().join("o"));
        assert_eq!(res.status.code(), Some(2), "case {i}: {}", String::from_utf8_lossy(&res.stderr));
    }
    std::fs::write(tmp.path().join("broken.json"), "{ not json").unwrap();
    assert_eq!(run(&tmp.path().join("broken.json"), &tmp.path().join("o")).status.code(), Some(2));
    assert_eq!(run(&tmp.path().join("missing.json"), &tmp.path().join("o")).status.code(), Some(2));
}

#[test]
fn divergence_exits_with_code_3_and_keeps_partial_outputs() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = quadratic_config("ddp", 1);
    cfg["optimizer"]["learning_rate"] = json!(1e4);
    cfg["T_updates"] = json!(500);
    let out = tmp.path().join("out");
    let res = run(&write_config(tmp.path(), "c.json", &cfg), &out);
    assert_eq!(res.status.code(), Some(3));
    let rows = std::fs::read_to_string(out.join("metrics.csv")).unwrap().lines().count() - 1;
    assert!(rows > 0 && rows < 500);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"]["state"], "diverged");
}

#[test]
fn output_root_comes_from_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &quadratic_config("wp", 1));
    let root = tmp.path().join("root");
    let res = bin().args(["run", "--config"]).arg(&cfg).env("ACCO_SIM_OUT", &root).output().unwrap();
    assert!(res.status.success());
    let dirs: Vec<_> = std::fs::read_dir(&root).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1);
    assert!(dirs[0].file_name().unwrap().to_str().unwrap().starts_with("wp-"));
    assert!(dirs[0].join("metrics.csv").exists());
}

fn sweep(cfg: &Path, seeds: &str) -> Vec<(f64, f64)> {
    let res = bin().args(["sweep", "--config"]).arg(cfg).args(["--seeds", seeds]).output().unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = String::from_utf8(res.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("update,mean_loss,std_loss,mean_sim_time_s,n_seeds"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn sweep_statistics() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = quadratic_config("acco", 1);
    cfg["full_batch"] = json!(false);
    cfg["problem"]["noise"] = json!(0.5);
    cfg["optimizer"]["learning_rate"] = json!(0.2);
    cfg["T_updates"] = json!(60);
    let path = write_config(tmp.path(), "c.json", &cfg);

    let single = sweep(&path, "4");
    assert!(single.iter().all(|&(_, s)| s == 0.0));
    let repeated = sweep(&path, "4,4,4");
    assert_eq!(repeated, single);

    let five = sweep(&path, "1,2,3,4,5");
    assert!(five.iter().any(|&(_, s)| s > 0.0));
    let early: f64 = five[..10].iter().map(|r| r.0).sum::<f64>() / 10.0;
    let late: f64 = five[50..].iter().map(|r| r.0).sum::<f64>() / 10.0;
    assert!(late < early);
}

#[test]
fn verify_reports_json_and_exit_status() {
    let res = bin().args(["verify", "--suite", "collectives"]).output().unwrap();
    assert_eq!(res.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(report["suite"], "collectives");
    assert_eq!(report["pass"], true);
    assert!(report["checks"].as_array().unwrap().len() >= 5);

    let res = bin().args(["verify", "--suite", "acco-gd-equivalence"]).output().unwrap();
    let report: Value = serde_json::from_slice(&res.stdout).unwrap();
    for c in report["checks"].as_array().unwrap() {
        assert!(c["lhs"].as_f64().unwrap() <= 1e-12);
    }

    let res = bin().args(["verify", "--suite", "nonsense"]).output().unwrap();
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn verify_exit_code_tracks_failed_checks() {
    // the zero3 row of the memory table does not survive flooring
    let res = bin().args(["verify", "--suite", "memory"]).output().unwrap();
    let report: Value = serde_json::from_slice(&res.stdout).unwrap();
    let failed: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["pass"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["zero3"]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn memory_subcommand() {
    let res = bin().args(["memory", "--method", "acco", "--k", "12", "--n", "64", "--psi", "7.5e9"]).output().unwrap();
    assert!(res.status.success());
    let v: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(v["gb_floor"], 46);
    assert_eq!(v["bytes"].as_f64().unwrap(), 46.40625e9);

    let res = bin().args(["memory", "--method", "fsdp", "--k", "12", "--n", "64", "--psi", "1"]).output().unwrap();
    assert_eq!(res.status.code(), Some(2));
}
