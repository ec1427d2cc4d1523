use std::path::PathBuf;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hamsynth")).args(args).output().expect("binary runs")
}

fn scratch_dir(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("hamsynth-cli-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn estimate_pf_commutator_json() {
    let out = bin(&["estimate", "pf", "--order", "4", "--bound", "commutator", "--n", "13"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["counts_pre"]["CNOT"].as_f64(), Some(18_149_040.0));
    assert_eq!(v["qubits"].as_u64(), Some(13));
    assert_eq!(v["t_estimate_label"], "ESTIMATE");
    assert_eq!(v["seeds"], serde_json::json!([0]));
}

#[test]
fn estimate_pf_analytic_first_order_r() {
    let out = bin(&["estimate", "pf", "--order", "1", "--bound", "analytic", "--n", "13"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["r"].as_f64(), Some(1_242_189_557.0));
}

#[test]
fn invalid_combination_is_usage_error() {
    let out = bin(&["estimate", "pf", "--order", "6", "--bound", "commutator"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--order 1|2|4") && err.contains("analytic|minimized|empirical"), "{err}");
}

#[test]
fn synth_optimize_simulate_roundtrip() {
    let d = scratch_dir("roundtrip");
    let raw = d.join("pf.circ");
    let opt = d.join("pf_opt.circ");
    let s = |p: &PathBuf| p.to_str().unwrap().to_string();
    assert!(bin(&["synth", "pf", "--n", "4", "--order", "2", "--bound", "commutator", "--out", &s(&raw)]).status.success());
    let out = bin(&["optimize", "--input", &s(&raw), "--out", &s(&opt)]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["after"]["counts"]["CNOT"].as_u64() < v["before"]["counts"]["CNOT"].as_u64());
    for p in [&raw, &opt] {
        let out = bin(&["simulate", "--input", &s(p), "--n", "4"]);
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(v["distance_up_to_phase"].as_f64().unwrap() <= 1e-3);
    }
}

#[test]
fn sweep_reproduces_series_and_is_byte_identical() {
    let d = scratch_dir("sweep");
    let spec = d.join("spec.json");
    std::fs::write(
        &spec,
        r#"{"cells":[{"algorithm":"pf","order":4,"bound":"commutator","n":[13,16,20,25],"seeds":[0]},
                     {"algorithm":"pf","order":6,"bound":"commutator","n":[13]}]}"#,
    )
    .unwrap();
    let a = d.join("a.csv");
    let b = d.join("b.csv");
    for p in [&a, &b] {
        let out = bin(&["sweep", spec.to_str().unwrap(), "--out", p.to_str().unwrap()]);
        assert!(out.status.success());
    }
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    let mut rdr = csv::Reader::from_reader(&text[..]);
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let cnots: Vec<f64> = rows[..4].iter().map(|r| r[col("cnot_pre")].parse().unwrap()).collect();
    assert_eq!(cnots, vec![18_149_040.0, 36_402_240.0, 76_632_000.0, 160_819_500.0]);
    assert!(rows[4][col("error")].contains("commutator"));
}
