//! Drives the installed binary end to end: exit codes, stdout contracts,
//! and the files each subcommand leaves behind.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stfgrid::io::nodebreaker::parse_nodebreaker;
use stfgrid::netmodel::{ElementParams, SwitchState};

fn case_path(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("cases").join(file)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stfgrid"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("binary should exit, not die on a signal")
}

/// The printed voltage table, i.e. every line of the bus listing.
fn voltage_table(text: &str) -> Vec<String> {
    text.lines()
        .skip_while(|l| !l.trim_start().starts_with("bus"))
        .skip(1)
        .take_while(|l| {
            l.split_whitespace().count() == 3
                && l.split_whitespace().all(|t| t.parse::<f64>().is_ok())
        })
        .map(str::to_owned)
        .collect()
}

#[test]
fn pf_converges_and_formulations_print_identical_tables() {
    let case = case_path("case9.m");
    let stf = run(&["pf", case.to_str().unwrap(), "--formulation", "stf"]);
    let ybus = run(&["pf", case.to_str().unwrap(), "--formulation", "ybus"]);
    assert_eq!(code(&stf), 0, "{}", String::from_utf8_lossy(&stf.stderr));
    assert_eq!(code(&ybus), 0);

    let t1 = voltage_table(&stdout(&stf));
    let t2 = voltage_table(&stdout(&ybus));
    assert_eq!(t1.len(), 9, "unexpected table:\n{}", stdout(&stf));
    // The contract: both formulations agree to all six printed decimals.
    assert_eq!(t1, t2);
}

#[test]
fn pf_accepts_nodebreaker_documents() {
    let out = run(&["pf", case_path("substation.nb.toml").to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("power flow converged"));
}

#[test]
fn opf_prints_objective_line() {
    let out = run(&["opf", case_path("case9.m").to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("objective 5296.69 $/h"), "stdout:\n{text}");
    assert!(text.contains("feasibility at 1e-6: pass"), "stdout:\n{text}");
}

#[test]
fn opf_iteration_cap_maps_to_solver_exit_code() {
    let out = run(&["opf", case_path("case9.m").to_str().unwrap(), "--max-iter", "2"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn unreadable_case_maps_to_input_exit_code() {
    let out = run(&["pf", "/no/such/case.m"]);
    assert_eq!(code(&out), 2);

    let out = run(&["opf", "/no/such/case.toml"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn malformed_case_maps_to_input_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("broken.m");
    std::fs::write(&bad, "function mpc = broken\nmpc.bus = [\n1 1 1\n").unwrap();
    let out = run(&["pf", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));

    let unknown = dir.path().join("case.xyz");
    std::fs::write(&unknown, "whatever").unwrap();
    assert_eq!(code(&run(&["pf", unknown.to_str().unwrap()])), 2);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&[])), 2);
}

#[test]
fn ybus_lemma1_check_passes_on_case9() {
    let out = run(&["ybus", case_path("case9.m").to_str().unwrap(), "--check-lemma1"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("max |reduced - direct| = "), "stdout:\n{text}");
    assert!(text.contains("(tol 1e-9)"), "stdout:\n{text}");
}

#[test]
fn ybus_random_sweep_is_reproducible_under_seed() {
    let case = case_path("case9.m");
    let args = ["ybus", case.to_str().unwrap(), "--check-lemma1", "--random", "6", "--seed"];
    let a = run(&[&args[..], &["7"]].concat());
    let b = run(&[&args[..], &["7"]].concat());
    let c = run(&[&args[..], &["8"]].concat());
    assert_eq!(code(&a), 0);
    assert_eq!(stdout(&a), stdout(&b), "same seed must reproduce the sweep");
    assert_ne!(stdout(&a), stdout(&c), "different seed should draw different networks");
}

#[test]
fn ybus_writes_matrix_market() {
    let dir = tempfile::tempdir().unwrap();
    let mtx = dir.path().join("y.mtx");
    let out = run(&["ybus", case_path("case14.m").to_str().unwrap(), "--out", mtx.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let body = std::fs::read_to_string(&mtx).unwrap();
    assert!(body.starts_with("%%MatrixMarket matrix coordinate complex"), "{body}");
}

#[test]
fn tableau_dumps_matrix_market() {
    let dir = tempfile::tempdir().unwrap();
    let mtx = dir.path().join("t.mtx");
    let out =
        run(&["tableau", case_path("case9.m").to_str().unwrap(), "--dump", mtx.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("tableau 45 x 45"), "stdout:\n{}", stdout(&out));

    let body = std::fs::read_to_string(&mtx).unwrap();
    let header: Vec<&str> = body.lines().skip_while(|l| l.starts_with('%')).take(1).collect();
    let dims: Vec<usize> =
        header[0].split_whitespace().map(|t| t.parse().unwrap()).collect();
    assert_eq!(&dims[..2], &[45, 45]);
}

#[test]
fn toggle_breaker_rewrites_document() {
    let dir = tempfile::tempdir().unwrap();
    let rewritten = dir.path().join("open.nb.toml");
    let out = run(&[
        "toggle-breaker",
        case_path("substation.nb.toml").to_str().unwrap(),
        "--element",
        "0",
        "--state",
        "0",
        "--out",
        rewritten.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let (network, _) = parse_nodebreaker(&rewritten).unwrap();
    match network.elements()[0].params() {
        ElementParams::Breaker { switch_state } => assert_eq!(*switch_state, SwitchState::Open),
        other => panic!("element 0 should still be a breaker, got {other:?}"),
    }
}

#[test]
fn toggle_breaker_rejects_non_breaker_elements() {
    let out = run(&[
        "toggle-breaker",
        case_path("substation.nb.toml").to_str().unwrap(),
        "--element",
        "1",
        "--state",
        "0",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn pf_report_is_valid_json() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("pf.json");
    let out = run(&[
        "pf",
        case_path("case9.m").to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);

    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc["kind"], "pf");
    assert_eq!(doc["formulation"], "stf");
    assert_eq!(doc["buses"].as_array().unwrap().len(), 9);
    assert!(doc.get("objective_per_hour").is_none() || doc["objective_per_hour"].is_null());
}

#[test]
fn opf_report_carries_dispatch_and_prices() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("opf.json");
    let out = run(&[
        "opf",
        case_path("case9.m").to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);

    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc["kind"], "opf");
    let objective = doc["objective_per_hour"].as_f64().unwrap();
    assert!((objective - 5296.69).abs() < 0.5);
    assert_eq!(doc["multipliers"].as_array().unwrap().len(), 9);
    let pg0 = doc["generators"][0]["pg_mw"].as_f64().unwrap();
    assert!((pg0 - 89.80).abs() < 0.1);
}
