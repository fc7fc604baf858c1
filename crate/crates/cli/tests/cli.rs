use std::path::PathBuf;
use std::process::{Command, Output};

fn examples() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples")
}

fn saddlekit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_saddlekit"))
        .args(args)
        .current_dir(examples())
        .output()
        .expect("binary runs")
}

fn scratch(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("saddlekit-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, contents).unwrap();
    p
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(saddlekit(&["--help"]).status.code(), Some(0));
    assert_eq!(saddlekit(&["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_64() {
    for args in [
        vec![],
        vec!["solve"],
        vec!["frobnicate"],
        vec!["solve", "quadratic.game", "--tol", "fast"],
        vec!["solve", "quadratic.game", "--tol", "0"],
        vec!["sweep", "quadratic.game"],
        vec!["solve", "switch.game"],
        vec!["matrix", "pennies.txt", "--format", "csv"],
        vec!["safety", "exa53.game", "--side", "B", "--strategy", "{\"kind\":\"nope\"}"],
        vec!["turnbased", "separable.game"],
        vec!["probe", "quadratic.game", "--jobs", "0"],
    ] {
        let out = saddlekit(&args);
        assert_eq!(out.status.code(), Some(64), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn errors_and_refutations_exit_1() {
    assert_eq!(saddlekit(&["solve", "missing.game"]).status.code(), Some(1));
    let bad = scratch("bad.game", "[game]\npayoff = \"a +\"\na_domain = \"reals\"\nb_domain = \"reals\"\n");
    assert_eq!(saddlekit(&["solve", bad.to_str().unwrap()]).status.code(), Some(1));
    let flat = scratch("flat.game", "[game]\npayoff = \"a*b\"\na_domain = \"reals\"\nb_domain = \"reals\"\n");
    let out = saddlekit(&["probe", flat.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["a"]["lower"]["kind"], "growth_refuted");
    let outside = saddlekit(&["safety", "exa53.game", "--side", "A", "--strategy", "{\"kind\":\"finite\",\"atoms\":[[0.5,1.0]]}"]);
    assert_eq!(outside.status.code(), Some(1));
}

#[test]
fn unconverged_solve_exits_1_with_best_certificate() {
    let path = scratch("kink.game", "[game]\npayoff = \"exp(a)+exp(-a)-b^2+[a<b]\"\na_domain = \"reals\"\nb_domain = \"reals\"\n");
    let out = saddlekit(&["solve", path.to_str().unwrap(), "--max-refine", "0", "--tol", "1e-9"]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert_eq!(v["converged"], false);
    assert!(v["certificate"]["eps"].as_f64().unwrap() > 1e-9);
}

#[test]
fn solve_reports_the_origin_saddle() {
    let out = saddlekit(&["solve", "quadratic.game", "--tol", "1e-4", "--seed", "17"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["header"]["seed"], 17);
    assert_eq!(v["header"]["command"], "solve");
    assert_eq!(v["verified"], true);
    assert!(v["certificate"]["value"].as_f64().unwrap().abs() <= 1e-4);
    assert_eq!(v["certificate"]["piA"]["kind"], "finite");
}

#[test]
fn out_file_gets_machine_output_and_stdout_the_summary() {
    let target = std::env::temp_dir().join(format!("saddlekit-out-{}.json", std::process::id()));
    let out = saddlekit(&["matrix", "pennies.txt", "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let summary = String::from_utf8(out.stdout).unwrap();
    assert!(summary.starts_with("2x2 matrix game: value 0.0"), "{summary}");
    let written: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&target).unwrap()).unwrap();
    assert_eq!(written["value"], serde_json::json!(0.0));
    assert_eq!(written["row_strategy"].as_array().unwrap().len(), 2);
}

#[test]
fn sweep_writes_value_csv() {
    let csv = std::env::temp_dir().join(format!("saddlekit-sweep-{}.csv", std::process::id()));
    let out = saddlekit(&["sweep", "switch.game", "--csv", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["diagnostics"]["lsc"]["verdict"], "pass");
    assert_eq!(v["diagnostics"]["continuity"]["at"], serde_json::json!([0.0]));
    let table = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "x,v,eps,converged,error");
    assert_eq!(lines.len(), 42);
    assert!(lines[41].starts_with("1.0,1.0,"), "{}", lines[41]);
}

#[test]
fn continuity_profile_fails_on_the_switch_family() {
    let out = saddlekit(&["sweep", "switch.game", "--profile", "continuity"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn turnbased_emits_one_line_per_state() {
    let out = saddlekit(&["turnbased", "coupled.game", "--x-grid", "-1:1:5"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[0]["header"]["command"], "turnbased");
    assert_eq!(lines[1]["x"], serde_json::json!(-1.0));
    let separable = saddlekit(&["turnbased", "separable.game", "--x", "2", "--sufficiency", "50"]);
    let line: serde_json::Value = serde_json::from_str(String::from_utf8(separable.stdout).unwrap().lines().nth(1).unwrap()).unwrap();
    assert_eq!(line["v_sharp"], serde_json::json!(2.0));
    assert_eq!(line["pure_sufficiency"]["passed"], true);
}

#[test]
fn safety_accepts_exact_ratios() {
    let out = saddlekit(&["safety", "exa53.game", "--side", "B", "--strategy", "{\"kind\":\"geometric\",\"ratio\":\"1/12\"}"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["verdict"], "UnsafeWitness");
    assert_eq!(v["strategy"]["ratio"], "1/12");
    let finite = saddlekit(&["safety", "exa53.game", "--side", "A", "--strategy", "{\"kind\":\"finite\",\"atoms\":[[1,0.5],[2,0.5]]}"]);
    assert_eq!(json(&finite)["detail"], "FiniteSupport");
}
