use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qres::freesets::{FreeSetSpec, NoiseSet};
use qres::measures::robustness_with;
use qres::sdp::SolverOptions;
use qres::{ChoiChannel, HermitianMatrix};
use serde_json::Value;

fn examples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples")
}

fn ex(name: &str) -> String {
    examples().join(name).display().to_string()
}

fn qres(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qres")).args(args).output().expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("bad JSON ({e}): {}\nstderr: {}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
    })
}

fn num(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or_else(|| panic!("{key} missing in {v}"))
}

fn csv_column(out: &Output, col: &str) -> Vec<f64> {
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == col).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn plus_state_robustness_and_emax() {
    let out = qres(&["robustness", &ex("plus_state.json"), "--free-set", &ex("incoherent_2.json")]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert!((num(&v, "value") - 1.0).abs() < 1e-5);
    assert_eq!(v["exactness"], "exact");
    let out = qres(&["emax", &ex("plus_state.json"), "--free-set", &ex("incoherent_2.json")]);
    assert_eq!(out.status.code(), Some(0));
    assert!((num(&json_of(&out), "value") - 1.0).abs() < 1e-5);
}

#[test]
fn free_state_has_zero_weight() {
    let out = qres(&["weight", &ex("free_state.json"), "--free-set", &ex("incoherent_2.json")]);
    assert_eq!(out.status.code(), Some(0));
    assert!(num(&json_of(&out), "value").abs() < 1e-7);
}

#[test]
fn infinite_free_robustness_exits_two() {
    let out = qres(&["robustness", &ex("plus_state.json"), "--free-set", &ex("incoherent_2.json"), "--noise", "free"]);
    assert_eq!(out.status.code(), Some(2));
    let v = json_of(&out);
    assert_eq!(v["infinite"], true);
    assert!(v["value"].is_null());
}

#[test]
fn bell_game_ratio_is_two() {
    let out = qres(&["game-verify", &ex("bell_state.json"), "--free-set", &ex("ppt_2x2.json")]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert!((num(&v, "ratio") - 2.0).abs() < 1e-3);
    assert_eq!(v["passed"], true);
    let out = qres(&["game-verify", &ex("bell_state.json"), "--free-set", &ex("ppt_2x2.json"), "--measure", "weight"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert!(num(&v, "ratio").abs() < 1e-3, "{v}");
}

#[test]
fn free_object_game_ratio_is_one_or_excluded() {
    let out = qres(&["game-verify", &ex("free_state.json"), "--free-set", &ex("incoherent_2.json")]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    if v["excluded"] == false {
        assert!((num(&v, "ratio") - 1.0).abs() < 1e-3, "{v}");
    }
}

#[test]
fn identity_pair_game_matches_tuple_robustness() {
    let r = json_of(&qres(&["compat", &ex("identity_pair.json")]));
    let g = qres(&["game-verify", &ex("identity_pair.json"), "--free-set", &ex("compatible_2_2x2.json")]);
    assert_eq!(g.status.code(), Some(0));
    let g = json_of(&g);
    assert!((num(&g, "ratio") - (1.0 + num(&r, "value"))).abs() < 1e-3);
}

/// Closed form for the vacuum-anchored truncation of a Schmidt-diagonal pure
/// state with amplitudes `c`: `(Σ_{k<n} c_k)² - Σ_{k<n} c_k²`.
fn schmidt_level_value(c: &[f64], n: usize) -> f64 {
    let s1: f64 = c[..n].iter().sum();
    let s2: f64 = c[..n].iter().map(|x| x * x).sum();
    s1 * s1 - s2
}

#[test]
fn tmsv_sweep_is_monotone_and_matches_closed_form() {
    let out = qres(&["run", "--config", &ex("tmsv_sweep_config.json")]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let values = csv_column(&out, "value");
    let levels = csv_column(&out, "level");
    let norm: f64 = (0..5).map(|k| 0.25f64.powi(k)).sum::<f64>().sqrt();
    let c: Vec<f64> = (0..5).map(|k| 0.5f64.powi(k) / norm).collect();
    for (l, v) in levels.iter().zip(&values) {
        assert!((v - schmidt_level_value(&c, *l as usize)).abs() < 1e-6, "level {l}: {v}");
    }
    assert!(values.windows(2).all(|w| w[1] >= w[0] - 1e-7));
    // the qubit level equals 2 c0 c1
    assert!((values[0] - 2.0 * c[0] * c[1]).abs() < 1e-6);
}

#[test]
fn coherent_sweep_matches_per_level_oracle() {
    let out = qres(&["approx-sweep", &ex("coherent.json"), "--free-set", &ex("incoherent_8.json"), "--levels", "2..8", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let values = csv_column(&out, "value");
    let mut c = vec![1.0f64];
    for k in 1..8 {
        c.push(c[k - 1] / (k as f64).sqrt());
    }
    let norm: f64 = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    let c: Vec<f64> = c.iter().map(|x| x / norm).collect();
    for (i, v) in values.iter().enumerate() {
        assert!((v - schmidt_level_value(&c, i + 2)).abs() < 1e-6, "level {}: {v}", i + 2);
    }
}

#[test]
fn supported_object_gives_constant_column() {
    let out = qres(&["approx-sweep", &ex("plus_state.json"), "--free-set", &ex("incoherent_2.json"), "--levels", "1..2", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let obj = dir.path().join("plus_in_5.json");
    let s = 0.5;
    let mut re = vec![vec![0.0; 5]; 5];
    for i in 0..2 {
        for j in 0..2 {
            re[i][j] = s;
        }
    }
    let state = serde_json::json!({"state": {"dim": 5, "rho": {"dim": 5, "re": re}}});
    std::fs::write(&obj, state.to_string()).unwrap();
    let out = qres(&[
        "approx-sweep",
        obj.to_str().unwrap(),
        "--free-set",
        r#"{"kind":"incoherent","dim":5}"#,
        "--levels",
        "2..5",
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    for v in csv_column(&out, "value") {
        assert!((v - 1.0).abs() < 1e-6);
    }
}

#[test]
fn depolarizing_broadcast_threshold() {
    let out = qres(&["compat", "--bisect-depolarizing", "2"]);
    assert_eq!(out.status.code(), Some(0));
    assert!((num(&json_of(&out), "threshold") - 0.667).abs() < 0.01);
}

#[test]
fn marginal_examples() {
    let f = ex("marginal_2_2x2.json");
    let out = qres(&["marginal", &ex("product_marginals.json"), "--free-set", &f, "--mode", "membership"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json_of(&out)["feasible"], true);
    let out = qres(&["marginal", &ex("product_marginals.json"), "--free-set", &f]);
    assert!(num(&json_of(&out), "value").abs() < 1e-7);
    let out = qres(&["marginal", &ex("bell_pair.json"), "--free-set", &f, "--mode", "membership"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json_of(&out)["feasible"], false);
    let out = qres(&["marginal", &ex("bell_pair.json"), "--free-set", &f, "--mode", "weight"]);
    assert!((num(&json_of(&out), "value") - 1.0).abs() < 1e-6);
}

#[test]
fn reports_are_byte_identical() {
    let args = ["robustness", &ex("bell_state.json"), "--free-set", &ex("ppt_2x2.json"), "--emit-witness"];
    let a = qres(&args);
    let b = qres(&args);
    assert_eq!(a.stdout, b.stdout);
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("a.csv");
    let p2 = dir.path().join("b.csv");
    for (p, jobs) in [(&p1, "1"), (&p2, "3")] {
        let out = qres(&["approx-sweep", "--config", &ex("tmsv_sweep_config.json"), "--out", p.to_str().unwrap(), "--jobs", jobs]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
}

#[test]
fn emitted_matrices_reload_exactly() {
    let out = qres(&["robustness", &ex("bell_state.json"), "--free-set", &ex("ppt_2x2.json"), "--emit-witness"]);
    let v = json_of(&out);
    let fp: HermitianMatrix = serde_json::from_value(v["free_point"][0].clone()).unwrap();
    let text = std::fs::read_to_string(ex("bell_state.json")).unwrap();
    let obj: Value = serde_json::from_str(&text).unwrap();
    let rho: qres::DensityMatrix = serde_json::from_value(obj["state"].clone()).unwrap();
    let f = FreeSetSpec::PptSeparable { dim_a: 2, dim_b: 2 };
    let opts = SolverOptions { record_history: false, ..SolverOptions::default() };
    let r = robustness_with(&[ChoiChannel::from_state(&rho)], &f, NoiseSet::All, &opts).unwrap();
    assert!(fp.max_abs_diff(&r.free_point.unwrap()[0]) < 1e-12);
}

#[test]
fn input_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"state\": {\"dim\": 2,\n  \"rho\": [1, }\n}").unwrap();
    let out = qres(&["robustness", bad.to_str().unwrap(), "--free-set", &ex("incoherent_2.json")]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    let out = qres(&["robustness", &ex("plus_state.json"), "--free-set", r#"{"kind":"incoherent","dim":2,"bogus":1}"#]);
    assert_eq!(out.status.code(), Some(1));
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"command":"robustness","surprise":true}"#).unwrap();
    assert_eq!(qres(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
    let out = qres(&["robustness", &ex("bell_state.json"), "--free-set", &ex("incoherent_2.json")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn flags_override_config() {
    let cfg = ex("robustness_config.json");
    let out = qres(&["robustness", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    assert!((num(&json_of(&out), "value") - 1.0).abs() < 1e-5);
    let out = qres(&["robustness", "--config", &cfg, "--noise", "free"]);
    assert_eq!(out.status.code(), Some(2));
}
