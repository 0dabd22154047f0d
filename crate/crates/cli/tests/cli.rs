use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn smoke_config() -> Value {
    let spec = |id: usize, gamma: f64, freq: f64| {
        json!({"domain_id": id, "gamma": gamma, "contrast": 1.0, "texture_freq": freq, "texture_amp": 0.05, "noise_sigma": 0.03})
    };
    json!({
        "base_seed": 7,
        "data": {"n_domains": 3, "n_per_domain": 6, "image_size": 8,
                 "specs": [spec(0, 0.6, 2.0), spec(1, 1.0, 1.0), spec(2, 1.5, 3.0)]},
        "ebm": {"n_iters": 2, "batch_size": 4, "step_size": 0.01, "n_steps": 6},
        "langevin": {"step_size": 0.01, "n_steps": 6, "store_stride": 3, "store_offset": 3},
        "segmenter": {"seeds": [0], "seg": {"epochs": 2}},
        "theory": {
            "k": 50,
            "scan": {"betas": [0.05, 0.1, 0.2, 0.4], "n_mc": 200, "n_mc_max": 400},
            "rademacher": {"n_mc": 50, "rho": {"n_probes": 20, "kappa1": 2.0, "radii": [5.0, 6.0]}},
            "coverage": {"replicates": 3, "n_test": 500, "rho": {"n_probes": 20, "kappa1": 2.0, "radii": [5.0, 6.0]}}
        },
        "sweep": {"axis": "k", "values": [20, 40, 60, 80]}
    })
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_langdaug"))
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn read(p: PathBuf) -> String {
    fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let no_seed = write_config(tmp.path(), "a.json", &json!({"data": {}}));
    let o = run("gen-data", &no_seed, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("base_seed"));

    let typo = write_config(tmp.path(), "b.json", &json!({"base_seed": 1, "langevin": {"stepsize": 0.1}}));
    assert_eq!(run("gen-data", &typo, &out, &[]).status.code(), Some(2));

    let mut cfg = smoke_config();
    cfg["theory"]["scan"]["betas"] = json!([0.0, 0.05, 0.1, 0.4]);
    let zero_beta = write_config(tmp.path(), "c.json", &cfg);
    let o = run("verify-theory", &zero_beta, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("betas must be strictly positive"));

    let missing = tmp.path().join("absent.json");
    assert_eq!(run("gen-data", &missing, &out, &[]).status.code(), Some(2));
}

#[test]
fn missing_upstream_exits_3_and_names_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &smoke_config());
    let out = tmp.path().join("run");
    let o = run("train-ebms", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("benchmark.ldtn"));
    ok(&run("gen-data", &cfg, &out, &[]));
    let o = run("augment", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ebm_0_1.ldtn"));
}

#[test]
fn divergence_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = smoke_config();
    v["ebm"]["step_size"] = json!(1e150);
    let cfg = write_config(tmp.path(), "c.json", &v);
    let out = tmp.path().join("run");
    ok(&run("gen-data", &cfg, &out, &[]));
    assert_eq!(run("train-ebms", &cfg, &out, &[]).status.code(), Some(4));
}

#[test]
fn pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &smoke_config());
    let out = tmp.path().join("run");
    for cmd in ["gen-data", "train-ebms", "augment", "train-seg", "eval-loo", "project"] {
        ok(&run(cmd, &cfg, &out, &[]));
        let dir = out.join(cmd);
        let manifest: Value = serde_json::from_str(&read(dir.join("manifest.json"))).unwrap();
        assert!(dir.join("config.resolved.json").is_file());
        if cmd != "gen-data" {
            assert!(!manifest["inputs"].as_object().unwrap().is_empty(), "{cmd}");
        }
    }
    let traces = fs::read_dir(out.join("train-ebms"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("trace_"))
        .count();
    assert_eq!(traces, 6);
    // 3 domains, 5 training images each, 2 stored steps, 6 ordered pairs.
    let counts = read(out.join("augment/counts.csv"));
    let total: usize = counts.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 6 * 5 * 2);
    let loo = read(out.join("eval-loo/results.csv"));
    assert!(loo.starts_with("fold,method,seed,mean_dice,mean_iou\n"));
    assert_eq!(loo.lines().count(), 1 + 3 * 2);
    let coords = read(out.join("project/coords.csv"));
    assert_eq!(coords.lines().count(), 1 + 18 + 60);
    assert_eq!(read(out.join("project/centroids.csv")).lines().count(), 1 + 12);
}

#[test]
fn sweep_over_k_gives_one_row_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &smoke_config());
    let out = tmp.path().join("run");
    ok(&run("gen-data", &cfg, &out, &[]));
    ok(&run("sweep", &cfg, &out, &[]));
    let summary = read(out.join("sweep/sweep_summary.csv"));
    let values: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(values, ["20", "40", "60", "80"]);
    assert!(summary.lines().skip(1).all(|l| !l.contains("NaN")));
    assert_eq!(read(out.join("sweep/sweep.csv")).lines().count(), 1 + 4 * 3 * 2);
}

#[test]
fn worker_count_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &smoke_config());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (out, jobs) in [(&a, "1"), (&b, "3")] {
        for cmd in ["gen-data", "train-ebms", "eval-loo", "verify-theory"] {
            ok(&run(cmd, &cfg, out, &["--jobs", jobs]));
        }
    }
    for f in [
        "train-ebms/trace_0_1.csv",
        "eval-loo/results.csv",
        "eval-loo/per_sample.csv",
        "verify-theory/report.csv",
        "verify-theory/rademacher.csv",
        "verify-theory/coverage.csv",
        "verify-theory/summary.json",
        "verify-theory/manifest.json",
    ] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_override_changes_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &smoke_config());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&run("gen-data", &cfg, &a, &[]));
    ok(&run("gen-data", &cfg, &b, &["--seed", "8"]));
    let f = "gen-data/data/benchmark.ldtn";
    assert_ne!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    let resolved: Value = serde_json::from_str(&read(b.join("gen-data/config.resolved.json"))).unwrap();
    assert_eq!(resolved["base_seed"], 8);
}
