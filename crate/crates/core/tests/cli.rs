use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gossipopt")).args(args).output().expect("binary runs")
}

fn spectrum(desc: &str) -> Value {
    let out = bin(&["spectrum", "--graph", desc]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn spectrum_reports() {
    let ring = spectrum(r#"{"kind":"ring","n":4}"#);
    assert!((ring["chi"].as_f64().unwrap() - 2.0).abs() < 1e-10);
    assert_eq!(ring["edges"], 4);
    let k3 = spectrum(r#"{"kind":"complete","n":3}"#);
    assert!((k3["chi"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    assert_eq!(k3["chebyshev"]["T"], 1);
    assert_eq!(k3["chebyshev"]["degenerate"], true);
    let p2 = spectrum(r#"{"kind":"path","n":2}"#);
    assert!((p2["lambda_max"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!((p2["lambda_min_plus"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    for key in ["c1", "c2", "c3", "chi_eff"] {
        assert!(ring["chebyshev"].get(key).is_some(), "{key}");
    }
}

#[test]
fn exit_codes() {
    assert_eq!(bin(&["spectrum", "--graph", r#"{"kind":"ring","n":1}"#]).status.code(), Some(1));
    assert_eq!(bin(&["spectrum", "--graph", "not json"]).status.code(), Some(1));
    assert_eq!(bin(&["run", "--config", "/nonexistent/config.json"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"schema":1,"graph":{"kind":"ring","n":4},"objective":{"kind":"quadratic","d":2},
        "solvers":[{"algorithm":"extra","max_iters":1,"eps":1e-9}],"output_dir":"x"}"#)
    .unwrap();
    assert_eq!(bin(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}

fn write_config(dir: &Path, max_iters: usize, algorithms: &[&str]) -> String {
    let solvers: Vec<String> = algorithms
        .iter()
        .map(|a| format!(r#"{{"algorithm":"{a}","max_iters":{max_iters},"eps":1e-10,"record_every":5}}"#))
        .collect();
    let cfg = format!(
        r#"{{"schema":1,"graph":{{"kind":"ring","n":4}},"objective":{{"kind":"quadratic","d":3,"kappa":20}},
            "solvers":[{}],"output_dir":{:?},"seed":12}}"#,
        solvers.join(","),
        dir.join("out")
    );
    let path = dir.join("cfg.json");
    fs::write(&path, cfg).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn zero_iterations_write_only_the_initial_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0, &["papc", "apapc", "opapc", "loopless"]);
    assert!(bin(&["run", "--config", &cfg]).status.success());
    for alg in ["papc", "apapc", "opapc", "loopless"] {
        let csv = fs::read_to_string(dir.path().join("out").join(format!("{alg}.csv"))).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2, "{alg}");
        assert_eq!(lines[0], "iter,grad_evals,comm_rounds,sq_dist,lyapunov");
        assert!(lines[1].starts_with("0,0,0,"));
    }
}

#[test]
fn end_to_end_run_converges_and_is_deterministic() {
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let cfg = write_config(dir.path(), 100_000, &["apapc", "loopless"]);
            let out = bin(&["run", "--config", &cfg]);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            let read = |f: &str| fs::read(dir.path().join("out").join(f)).unwrap();
            (read("apapc.csv"), read("loopless.csv"), read("summary.json"))
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    let summary: Value = serde_json::from_slice(&runs[0].2).unwrap();
    for s in summary["solvers"].as_array().unwrap() {
        assert!(s["final_sq_dist"].as_f64().unwrap() <= 1e-10, "{s}");
        assert_eq!(s["stop"]["reason"], "converged");
        assert_eq!(s["grad_evals"], s["comm_rounds"]);
    }
    assert!((summary["spectral"]["chi"].as_f64().unwrap() - 2.0).abs() < 1e-10);
}

#[test]
fn gen_data_is_deterministic_libsvm() {
    let dir = tempfile::tempdir().unwrap();
    let paths = [dir.path().join("a.svm"), dir.path().join("b.svm")];
    for p in &paths {
        let out = bin(&["gen-data", "--kind", "synth", "--n", "30", "--d", "5", "--seed", "8", "--out", p.to_str().unwrap()]);
        assert!(out.status.success());
    }
    let a = fs::read(&paths[0]).unwrap();
    assert_eq!(a, fs::read(&paths[1]).unwrap());
    let ds = gossipopt::dataio::parse_libsvm(&a[..]).unwrap();
    assert_eq!((ds.len(), ds.d()), (30, 5));
}
