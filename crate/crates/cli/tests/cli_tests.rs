//! End-to-end tests for the `viewdet` binary and the problem-file syntax:
//! parse/print round trips on every bundled fixture, plus the exit-code
//! contract of each subcommand.

use std::path::PathBuf;
use std::process::{Command, Output};
use viewdet_cli::{parser, printer};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn viewdet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_viewdet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn printing_is_a_fixpoint_of_parsing_on_all_fixtures() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut checked = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let src = std::fs::read_to_string(&path).unwrap();
        let once = printer::print(&parser::parse(&src).unwrap_or_else(|e| {
            panic!("{} fails to parse: {e}", path.display());
        }));
        let twice = printer::print(&parser::parse(&once).unwrap_or_else(|e| {
            panic!("printed form of {} fails to parse: {e}", path.display());
        }));
        assert_eq!(once, twice, "print is not a parse fixpoint for {}", path.display());
        checked += 1;
    }
    assert!(checked >= 9, "expected to round-trip every bundled fixture");
}

#[test]
fn determined_problem_exits_zero() {
    let out = viewdet(&["decide", fixture("ex_constraints.mdp").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("DETERMINED"), "stdout: {text}");
    assert!(text.contains("decideFull"), "stdout: {text}");
}

#[test]
fn candidate_counterexample_exits_one() {
    let out = viewdet(&[
        "search",
        fixture("ex_fc.mdp").to_str().unwrap(),
        "--unfold-depth",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("NOT_DETERMINED CANDIDATE"));
}

#[test]
fn certified_counterexample_exits_one() {
    let out = viewdet(&["search", fixture("ex_fc_nosigma.mdp").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("NOT_DETERMINED CERTIFIED"));
}

#[test]
fn generated_halting_machine_is_refuted_at_depth_three() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("halt3.mdp");
    let out = viewdet(&[
        "gen",
        "tm",
        fixture("halt3.tm").to_str().unwrap(),
        "-o",
        problem.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let out = viewdet(&["search", problem.to_str().unwrap(), "--unfold-depth", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("NOT_DETERMINED CERTIFIED"));
}

#[test]
fn out_of_scope_decision_procedure_exits_four() {
    let out = viewdet(&["decide", fixture("norewrite.mdp").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("unsupported rule class"));
}

#[test]
fn parse_errors_exit_three_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.mdp");
    std::fs::write(&bad, "tgd R(X,\n").unwrap();
    let out = viewdet(&["classify", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("PARSE_ERROR at"));
}

#[test]
fn arity_conflicts_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("arity.mdp");
    std::fs::write(&bad, "pred R/2.\ntgd R(X) -> R(Y,Z).\n").unwrap();
    let out = viewdet(&["classify", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("arity mismatch"));
}

#[test]
fn usage_errors_exit_three_and_help_exits_zero() {
    assert_eq!(viewdet(&["no-such-command"]).status.code(), Some(3));
    assert_eq!(viewdet(&["--help"]).status.code(), Some(0));
}

#[test]
fn generated_tiling_problem_has_unary_inclusion_rules() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("tiling.mdp");
    let out = viewdet(&[
        "gen",
        "tiling",
        fixture("demo.tiling").to_str().unwrap(),
        "-o",
        problem.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let out = viewdet(&["classify", problem.to_str().unwrap(), "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["rules"]["uid"], serde_json::Value::Bool(true));
}

#[test]
fn brute_force_confirms_a_determined_problem() {
    let out = viewdet(&[
        "brute",
        fixture("ex_constraints.mdp").to_str().unwrap(),
        "--max-domain",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn chase_saturates_and_reports_derived_facts() {
    let out = viewdet(&["chase", fixture("facts.mdp").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("saturated"), "stdout: {text}");
    assert!(text.contains("R(a,a)"), "stdout: {text}");
}

#[test]
fn simulator_reports_the_halting_step_as_json() {
    let out = viewdet(&["sim", fixture("halt3.tm").to_str().unwrap(), "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["report"]["Tm"]["halts"], serde_json::json!([3, 1]));
}

#[test]
fn tree_codes_round_trip_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let code = dir.path().join("code.json");
    let out = viewdet(&["treecode", "encode", fixture("facts.mdp").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    std::fs::write(&code, out.stdout).unwrap();
    let out = viewdet(&[
        "treecode",
        "decode",
        code.to_str().unwrap(),
        fixture("facts.mdp").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    // The decoded instance is isomorphic to the input facts.
    assert_eq!(text.lines().count(), 3);
    assert_eq!(text.matches("R(").count(), 2);
    assert_eq!(text.matches("S(").count(), 1);
}

#[test]
fn backward_mapping_prints_a_datalog_program() {
    let out = viewdet(&["treecode", "backmap", fixture("ex_fc.mdp").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains(":-"));
}

#[test]
fn rewrite_finds_the_view_image_rewriting() {
    let path = fixture("ex_constraints.mdp");
    let out = viewdet(&["rewrite", path.to_str().unwrap(), "--method", "view-image"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("V("), "stdout: {}", stdout(&out));
    // Default backward rewriting stays over the base schema.
    let out = viewdet(&["rewrite", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("R(X,X)"), "stdout: {}", stdout(&out));
}

#[test]
fn eval_answers_over_the_declared_facts() {
    let out = viewdet(&["eval", fixture("facts.mdp").to_str().unwrap(), "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    // Q() := R(X,X): no self-loop among the raw facts.
    assert_eq!(v["answers"], serde_json::json!([]));
}
