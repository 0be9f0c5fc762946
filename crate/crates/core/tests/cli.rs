mod common;

use std::path::Path;

use common::fixture_path;
use cstree::cli::run;
use serde_json::Value;

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("cstree").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn call_json(args: &[&str]) -> Value {
    let mut a = vec!["--json"];
    a.extend_from_slice(args);
    let (code, out, err) = call(&a);
    assert_eq!(code, 0, "{err}");
    serde_json::from_str(&out).unwrap()
}

fn fx(name: &str) -> String {
    fixture_path(name).display().to_string()
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn count_cstrees_for_four_variables() {
    let v = call_json(&["count", "--what", "cstrees", "--p", "4"]);
    assert_eq!(v["value"], "59136");
    let (code, out, _) = call(&["count", "--what", "dags", "--p", "3"]);
    assert_eq!(code, 0);
    assert!(out.contains("25"));
}

#[test]
fn contexts_lists_the_three_minimal_contexts() {
    let v = call_json(&["contexts", "--tree", &fx("four_var_tree.json")]);
    let ctxs: Vec<String> = v["contexts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["context"].to_string())
        .collect();
    assert_eq!(ctxs, vec![r#"{"X1":"0"}"#, r#"{"X2":"0"}"#, r#"{"X3":"0"}"#]);
    let edges = &v["contexts"][1]["edges"];
    assert_eq!(edges.to_string(), r#"[["X1","X4"],["X3","X4"]]"#);
}

#[test]
fn export_dot_renders_tree_and_graphs() {
    let tree = fx("four_var_tree.json");
    let (code, out, _) = call(&["export-dot", "--tree", &tree]);
    assert_eq!(code, 0);
    assert!(out.starts_with("digraph"));
    let (code, out, _) = call(&["export-dot", "--tree", &tree, "--graphs"]);
    assert_eq!(code, 0);
    assert!(out.contains("X4"));
    let (code, out, _) = call(&[
        "export-dot",
        "--tree",
        &fx("targeted_tree_1234.json"),
        "--targets",
        &fx("targeted_tree_targets.json"),
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("w_"));
}

#[test]
fn sample_is_deterministic_and_learn_and_score_agree() {
    let dir = tempfile::tempdir().unwrap();
    let tree = fx("four_var_tree.json");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let (code, _, err) = call(&["sample", "--tree", &tree, "--n", "2000", "--seed", "3", "--out", &s(p)]);
        assert_eq!(code, 0, "{err}");
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let learned = dir.path().join("t.json");
    let v = call_json(&["learn", "--data", &s(&a), "--out", &s(&learned)]);
    let bic = v["score"]["bic"].as_f64().unwrap();
    let w = call_json(&["score", "--tree", &s(&learned), "--data", &s(&a)]);
    assert!((w["bic"].as_f64().unwrap() - bic).abs() <= 1e-9 * bic.abs());

    let e = call_json(&["equiv", "--a", &s(&learned), "--b", &s(&learned)]);
    assert_eq!(e["equivalent"], true);
}

#[test]
fn simulate_json_is_byte_identical_across_runs() {
    let args = [
        "--json", "simulate", "--p", "4", "--q", "0.5", "--n", "500", "--trials", "2", "--validation", "50", "--seed", "9",
    ];
    let (c1, o1, _) = call(&args);
    let (c2, o2, _) = call(&args);
    assert_eq!((c1, c2), (0, 0));
    assert_eq!(o1, o2);
}

#[test]
fn equiv_with_targets_and_intervene_search() {
    let dir = tempfile::tempdir().unwrap();
    let t1 = fx("targeted_tree_1234.json");
    let t2 = fx("targeted_tree_1324.json");
    let ts = fx("targeted_tree_targets.json");
    let v = call_json(&["equiv", "--a", &t1, "--b", &t2, "--targets-a", &ts, "--targets-b", &ts]);
    assert_eq!(v["equivalent"], true);

    let obs = dir.path().join("obs.csv");
    let int = dir.path().join("int.csv");
    call_json(&["sample", "--tree", &t1, "--n", "3000", "--seed", "1", "--out", &s(&obs)]);
    call_json(&["sample", "--tree", &t1, "--n", "3000", "--seed", "2", "--out", &s(&int)]);
    let v = call_json(&[
        "intervene",
        "--tree",
        &format!("{t1},{t2}"),
        "--obs",
        &s(&obs),
        "--int",
        &s(&int),
    ]);
    assert!(v.is_object(), "{v}");
}

#[test]
fn discretize_writes_binned_columns() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    let out = dir.path().join("bin.csv");
    std::fs::write(&raw, "a,b\n1.0,5\n2.0,3\n3.0,1\n4.0,2\n").unwrap();
    let (code, _, err) = call(&["discretize", "--data", &s(&raw), "--bins", "2", "--out", &s(&out)]);
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn user_errors_exit_one_with_json_error() {
    let (code, out, err) = call(&["--json", "contexts", "--tree", "/nonexistent/tree.json"]);
    assert_eq!(code, 1);
    assert!(out.is_empty());
    let v: Value = serde_json::from_str(&err).unwrap();
    assert_eq!(v["error"]["code"], 1);
    assert!(v["error"]["message"].as_str().unwrap().contains("nonexistent"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let (code, _, err) = call(&["contexts", "--tree", &s(&bad)]);
    assert_eq!(code, 1);
    assert!(err.starts_with("error:"));

    let (code, _, _) = call(&["count", "--what", "nonsense", "--p", "3"]);
    assert_eq!(code, 1);
}
