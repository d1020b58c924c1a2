use std::process::Command;

use dunkl_an::cli::{run, EXIT_INPUT, EXIT_OK};
use serde_json::Value;

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("dunkl-an").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn json(args: &[&str]) -> Value {
    let (code, out, err) = call(args);
    assert_eq!(code, EXIT_OK, "{err}");
    serde_json::from_str(&out).unwrap()
}

#[test]
fn eval_rank_one_closed_form() {
    let v = json(&["eval", "--n", "1", "--lambda", "1,0", "--x", "1,0"]);
    let row = &v[0];
    assert!((row["value"].as_f64().unwrap() - (1f64.exp() - 1.0)).abs() < 1e-13);
    assert_eq!(row["regime"], "small");
}

#[test]
fn eval_methods_agree() {
    let base = ["eval", "--n", "2", "--lambda", "2,0.5,0", "--x", "1.5,0.7,0"];
    let stable = json(&base)[0]["log_value"].as_f64().unwrap();
    for m in ["alt-sum", "iter"] {
        let mut args = base.to_vec();
        args.extend(["--method", m]);
        let v = json(&args)[0]["log_value"].as_f64().unwrap();
        assert!((v - stable).abs() < 1e-9, "{m}: {v} vs {stable}");
    }
}

#[test]
fn unsorted_input_warns_and_sorts() {
    let (code, out, err) = call(&["eval", "--n", "1", "--lambda", "0,1", "--x", "1,0"]);
    assert_eq!(code, EXIT_OK);
    assert!(err.contains("warning: lambda was not dominant"));
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v[0]["lambda"], serde_json::json!([1.0, 0.0]));
    assert_eq!(v[0]["warnings"].as_array().unwrap().len(), 1);
}

#[test]
fn input_errors_exit_two() {
    for args in [
        vec!["eval", "--n", "1", "--lambda", "1,0,0", "--x", "1,0"],
        vec!["eval", "--n", "9", "--lambda", "1,0", "--x", "1,0"],
        vec!["eval", "--n", "1", "--lambda", "a,0", "--x", "1,0"],
        vec!["heat", "--n", "1", "--x", "1,0", "--y", "1,0", "--t", "-1"],
        vec!["sweep", "--kind", "psi", "--n", "1", "--x-range", "1,2"],
        vec!["frobnicate"],
    ] {
        let (code, _, err) = call(&args);
        assert_eq!(code, EXIT_INPUT, "{args:?}: {err}");
        assert!(!err.is_empty());
    }
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_dunkl-an");
    let ok = Command::new(bin).args(["constants", "--n", "1"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let bad = Command::new(bin).args(["eval", "--n", "1"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn two_point_grid_gives_all_combinations() {
    for n in 1..=2usize {
        let ns = n.to_string();
        let v = json(&[
            "sweep", "--kind", "psi", "--n", &ns, "--lambda-range", "0.5,2,2", "--x-range", "0.5,2,2",
        ]);
        let records = v["records"].as_array().unwrap();
        assert_eq!(records.len(), 1 << (2 * n));
        assert!(records.iter().all(|r| r["ratio"].as_f64().unwrap() > 0.0));
    }
}

#[test]
fn sweeps_are_byte_identical() {
    let args = [
        "--format", "csv", "sweep", "--kind", "psi", "--n", "2", "--sampling", "random", "--samples", "40",
        "--seed", "7", "--lambda-range", "0.01,100,2", "--x-range", "0.01,100,2",
    ];
    let (c1, a, _) = call(&args);
    let (c2, b, _) = call(&args);
    assert_eq!((c1, c2), (EXIT_OK, EXIT_OK));
    assert_eq!(a, b);
    let mut threaded = vec!["--threads", "3"];
    threaded.extend(args);
    assert_eq!(call(&threaded).1, a);
}

#[test]
fn constants_match_convention() {
    let v = json(&["constants", "--n", "1"]);
    let mms = v["mms_integral"].as_f64().unwrap();
    assert!((mms - 4.0 * std::f64::consts::PI).abs() < 1e-12);
    assert!((v["c_k_mms"].as_f64().unwrap() - mms / 2.0).abs() < 1e-12);
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let out = dir.path().join("out.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"rank": 1, "lambda": [[1, 0]], "x": [[1, 0], [2, 0]], "output": {:?}}}"#,
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let path = cfg.to_str().unwrap();
    let (code, stdout, err) = call(&["--config", path, "eval"]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
    let (code, _, _) = call(&["--config", path, "eval", "--x", "3,0"]);
    assert_eq!(code, EXIT_OK);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 1);
    assert_eq!(v[0]["x"], serde_json::json!([3.0, 0.0]));
}
