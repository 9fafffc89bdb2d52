use std::process::{Command, Output};

use serde_json::Value;

fn data(file: &str) -> String {
    format!("{}/../../data/{file}", env!("CARGO_MANIFEST_DIR"))
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_siegel")).args(args).env_remove("SIEGEL_NODE_BUDGET").output().unwrap()
}

fn json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn roots_of_e8() {
    let v = json(&["roots", "--form", &data("unimodular.json#E8")]);
    assert_eq!(v["result"][0]["n2"], 240);
    assert_eq!(v["result"][0]["n1"], 0);
}

#[test]
fn cutoff_constant() {
    let v = json(&["cutoff", "--dim", "1000000"]);
    assert_eq!(v["result"]["constant"], 5113);
}

#[test]
fn report_header_carries_version_and_config() {
    let v = json(&["--seed", "7", "cutoff", "--dim", "100"]);
    assert_eq!(v["tool"], "siegel");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["command"], "cutoff");
    assert_eq!(v["config"]["seed"], 7);
    assert_eq!(v["config"]["command"]["cutoff"]["dim"], 100);
}

#[test]
fn missing_file_is_an_input_error() {
    let out = run(&["roots", "--form", "no/such/file.json#E8"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse error"));
}

#[test]
fn unknown_form_is_an_input_error() {
    let out = run(&["roots", "--form", &data("unimodular.json#E9")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_error_exits_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["variance", "--norm", "3"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn budget_exhaustion_exits_two() {
    let out = Command::new(env!("CARGO_BIN_EXE_siegel"))
        .args(["enumerate", "--form", &data("unimodular.json#I9"), "--norm", "9"])
        .env("SIEGEL_NODE_BUDGET", "50")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["--budget", "50", "enumerate", "--form", &data("unimodular.json#I9"), "--norm", "9"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rationals_are_exact_strings() {
    let v = json(&["mass", "--genus", &data("odd9.json"), "--norm", "1"]);
    assert_eq!(v["result"]["weights"], serde_json::json!(["15/17", "2/17"]));
    assert_eq!(v["result"]["enumerated"], "274/17");
    assert_eq!(v["result"]["represented_probability"], "1");
}

#[test]
fn enumerate_counts_and_lists() {
    let v = json(&["enumerate", "--form", &data("unimodular.json#I4"), "--norm", "3", "--list"]);
    assert_eq!(v["result"]["count"], 32);
    assert_eq!(v["result"]["solutions"].as_array().unwrap().len(), 32);
}

#[test]
fn enumerate_gram_target() {
    // Pairs of orthogonal roots in E8.
    let dir = std::env::temp_dir().join("siegel-cli-target");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("b.json");
    std::fs::write(&path, r#"[{"name":"B","dim":2,"gram":[2,0,0,2],"aut_order":"compute"}]"#).unwrap();
    let v = json(&["enumerate", "--form", &data("unimodular.json#E8"), "--target", path.to_str().unwrap()]);
    assert_eq!(v["result"]["count"], 240 * 126);
}

#[test]
fn aut_verify_against_database() {
    let v = json(&["aut", "--form", &data("dim16.json#E8+E8"), "--verify"]);
    assert_eq!(v["result"]["matches"], true);
    assert_eq!(v["result"]["order"], "970864271032320000");
}

#[test]
fn csv_rows_match_records() {
    let out = run(&[
        "--format",
        "csv",
        "caps",
        "--form",
        &data("unimodular.json#I4"),
        "--norm",
        "9",
        "--eta",
        "0.1,0.3,0.9",
        "--samples",
        "2000",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "eta,miss");
    assert_eq!(rows.len(), 1 + 3);
    assert!(text.lines().any(|l| l.starts_with("# config ")));
}

#[test]
fn reports_do_not_depend_on_task_count() {
    let args = |t: &'static str| {
        vec![
            "--tasks",
            t,
            "--seed",
            "11",
            "variance",
            "--genus",
            "",
            "--norm",
            "2",
            "--scale",
            "0.5",
            "--mode",
            "mc",
            "--samples",
            "20000",
        ]
    };
    let genus = data("unimodular.json#I4");
    let outs: Vec<Vec<u8>> = ["1", "3"]
        .iter()
        .map(|t| {
            let mut a = args(t);
            a[6] = &genus;
            let out = run(&a);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            out.stdout
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn weyl_sums_vanish_on_e8() {
    let v = json(&["weyl", "--genus", &data("unimodular.json#E8"), "--degree", "2", "--norm", "4"]);
    assert_eq!(v["result"]["all_zero"], true);
    assert_eq!(v["result"]["basis_dim"], 35);
}

#[test]
fn theta_of_e8_is_delta() {
    let v = json(&["theta", "--form", &data("unimodular.json#E8"), "--degree", "8", "--prec", "6"]);
    let c = &v["result"]["series"]["coeffs"];
    let (a2, a4, a6) = (ratio(&c["2"]), ratio(&c["4"]), ratio(&c["6"]));
    // a(4) / a(2) = -24 and a(6) / a(2) = 252, compared as fractions.
    assert_eq!(a4.0 * a2.1, -24 * a2.0 * a4.1);
    assert_eq!(a6.0 * a2.1, 252 * a2.0 * a6.1);
}

fn ratio(v: &Value) -> (i128, i128) {
    let s = v.as_str().unwrap();
    match s.split_once('/') {
        Some((p, q)) => (p.parse().unwrap(), q.parse().unwrap()),
        None => (s.parse().unwrap(), 1),
    }
}
