use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn graphdyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphdyn")).args(args).output().unwrap()
}

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.json");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

const SMALL: &str = r#"{
  "graphon": { "kind": "power_law", "alpha": 0.2, "gamma": 0.5 },
  "study": "continuum_convergence",
  "n_list": [16, 32],
  "M": 128,
  "seeds": { "count": 3, "master": 5 },
  "model": { "reaction": { "kind": "affine", "a": 0, "b": -1 }, "T": 0.5, "dt": 0.01 }
}"#;

#[test]
fn sample_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a.graph");
    let b = dir.path().join("b.graph");
    for out in [&a, &b] {
        let o = graphdyn(&["sample", "--config", &cfg, "--out", out.to_str().unwrap(), "--n", "64", "--seed", "9"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    assert!(text.starts_with("graphdyn-graph v1\nn=64 rho=0.12500000000000000 seed=9 variant=pointwise\n"));
}

#[test]
fn run_each_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let graph = dir.path().join("g.graph");
    assert!(graphdyn(&["sample", "--config", &cfg, "--out", graph.to_str().unwrap()]).status.success());
    for (model, extra) in [("sampled", Some(&graph)), ("sampled", None), ("averaged", None), ("galerkin", None)] {
        let out = dir.path().join(format!("{model}-{}", extra.is_some()));
        let mut args = vec!["run", "--config", &cfg, "--model", model, "--out", out.to_str().unwrap()];
        if let Some(g) = extra {
            args.extend(["--graph", g.to_str().unwrap()]);
        }
        let o = graphdyn(&args);
        assert!(o.status.success(), "{model}: {}", String::from_utf8_lossy(&o.stderr));
        let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
        let header = csv.lines().next().unwrap();
        assert!(header.starts_with("t,u_1,") && header.ends_with(",u_32"));
        // 50 steps at the default stride of 1 -> 51 snapshot rows
        assert_eq!(csv.lines().count(), 52);
        assert!(out.join("summary.json").exists());
    }
}

#[test]
fn large_run_writes_observables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("big");
    let o = graphdyn(&["run", "--config", &cfg, "--model", "galerkin", "--n", "2048", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let obs = std::fs::read_to_string(out.join("observables.csv")).unwrap();
    assert!(obs.starts_with("t,mean,l2,linf,gn_norm\n"));
    assert!(out.join("states_16.csv").exists());
    assert!(!out.join("trajectory.csv").exists());
}

#[test]
fn study_report_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let mut reports = Vec::new();
    for (k, serial) in [(0, false), (1, false), (2, true)] {
        let out = dir.path().join(format!("s{k}"));
        let mut args = vec!["study", "--config", &cfg, "--out", out.to_str().unwrap()];
        if serial {
            args.push("--serial");
        }
        let o = graphdyn(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        reports.push(std::fs::read(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2]);
    let v: serde_json::Value = serde_json::from_slice(&reports[0]).unwrap();
    for key in ["study", "graphon", "gamma", "T", "M", "records", "aggregates"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["records"].as_array().unwrap().len(), 6);
    assert_eq!(v["graphon"]["kind"], "power_law");
}

#[test]
fn overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("o");
    let o = graphdyn(&[
        "study", "--config", &cfg, "--out", out.to_str().unwrap(), "--study", "averaging", "--n-list", "8,16",
        "--seeds", "2", "--horizon", "0.2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(v["study"], "averaging");
    assert_eq!(v["T"], 0.2);
    let ns: Vec<u64> = v["records"].as_array().unwrap().iter().map(|r| r["n"].as_u64().unwrap()).collect();
    assert_eq!(ns, vec![8, 8, 16, 16]);
}

#[test]
fn check_and_kernel_dist_print_json() {
    let o = graphdyn(&["check", "--config", config_path("kernel_distance.json").to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 3);
    assert_eq!(v[0]["integrability"]["l4"], true);

    let o = graphdyn(&["kernel-dist", "--config", config_path("kernel_distance.json").to_str().unwrap(), "--n-list", "256,1024"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let d: Vec<f64> = v.as_array().unwrap().iter().map(|r| r["kernel_l4"].as_f64().unwrap()).collect();
    assert_eq!(d.len(), 2);
    // the distance only starts to fall once n is past a few dozen
    assert!(d[1] < d[0]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("x");
    let out = out.to_str().unwrap();

    // n not dividing M
    let o = graphdyn(&["study", "--config", &cfg, "--out", out, "--n-list", "16,24"]);
    assert_eq!(o.status.code(), Some(1));
    // missing file, bad JSON, unknown flag
    assert_eq!(graphdyn(&["check", "--config", "/nonexistent.json"]).status.code(), Some(1));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{").unwrap();
    assert_eq!(graphdyn(&["check", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(graphdyn(&["check", "--bogus"]).status.code(), Some(1));
    // L4 requirement
    let o = graphdyn(&["kernel-dist", "--config", &cfg, "--gamma", "0.5"]);
    assert_eq!(o.status.code(), Some(0));
    let heavy = write_config(dir.path(), &SMALL.replace("0.2, \"gamma\"", "0.3, \"gamma\""));
    assert_eq!(graphdyn(&["kernel-dist", "--config", &heavy]).status.code(), Some(1));

    // numeric blow-up
    let blow = write_config(dir.path(), &SMALL.replace("\"b\": -1", "\"b\": 60").replace("\"T\": 0.5", "\"T\": 1"));
    let o = graphdyn(&["run", "--config", &blow, "--model", "galerkin", "--out", out]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
