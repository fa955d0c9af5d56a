use std::process::Command;

use oblivious_aggregation::cli;

fn obagg(args: &str) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_obagg"))
        .args(args.split_whitespace())
        .env_remove("OBAGG_AUDIT_BUDGET")
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn in_process(args: &str) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("obagg").chain(args.split_whitespace());
    let code = cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn run_dropout_session() {
    let (code, out, _) = obagg("run --k 3 --q 5 --len 1 --scheme dropout --drop 2 --seed 7");
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("U={1,3}"));
    assert!(out.contains("result: all sums match"));
}

#[test]
fn run_nodropout_with_drop_is_a_protocol_error() {
    let (code, _, err) = obagg("run --k 3 --scheme nodropout --drop 2");
    assert_eq!(code, 1);
    assert!(err.contains("DroppedUserUnderNoDropoutScheme"), "{err}");
}

#[test]
fn config_errors_exit_2() {
    assert_eq!(obagg("run --k 1").0, 2);
    assert_eq!(in_process("run --k 3 --q 4").0, 2);
    assert_eq!(in_process("run --k 3 --drop 9").0, 2);
    assert_eq!(in_process("run --k 3 --drop 1 --drop-after 1 --scheme dropout").0, 2);
    assert_eq!(in_process("run --k 2 --inputs 1;2;3").0, 2);
    assert_eq!(in_process("run --k 2 --seed 1 --entropy").0, 2);
    assert_eq!(in_process("frobnicate").0, 2);
}

#[test]
fn explicit_inputs() {
    let (code, out, _) = in_process("run --k 3 --q 11 --len 2 --inputs 1,2;3,4;10,10");
    assert_eq!(code, 0);
    assert!(out.contains("oracle sum over U: [3,5]"), "{out}");
}

#[test]
fn stream_transport_matches_sim() {
    let args = "run --k 4 --q 97 --len 3 --scheme dropout --drop 1 --seed 5";
    let (c1, sim, _) = in_process(args);
    let (c2, tcp, _) = in_process(&format!("{args} --transport stream"));
    assert_eq!((c1, c2), (0, 0));
    let sums = |s: &str| {
        s.lines()
            .filter(|l| l.starts_with("user ") || l.starts_with("U="))
            .map(String::from)
            .collect::<Vec<_>>()
    };
    assert_eq!(sums(&sim), sums(&tcp));
}

#[test]
fn audit_examples() {
    let (code, out, _) = obagg("audit --k 2 --q 2 --len 1 --scheme nodropout");
    assert_eq!(code, 0, "{out}");
    assert!(!out.contains("FAIL"));
    let (code, out, _) = obagg("audit --k 3 --q 3 --len 1 --scheme dropout --survivors 1,3");
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("user-security k=3 U={1,3}"));
}

#[test]
fn audit_over_budget_exits_3() {
    let (code, _, err) = obagg("audit --k 3 --q 7 --len 4");
    assert_eq!(code, 3);
    assert!(err.contains(&7u128.pow(24).to_string()), "{err}");
    assert_eq!(in_process("audit --k 2 --q 2 --budget 15").0, 3);
}

#[test]
fn budget_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_obagg"))
        .args(["audit", "--k", "2", "--q", "2"])
        .env("OBAGG_AUDIT_BUDGET", "10")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn planted_flaw_fails_audit() {
    let (code, out, _) = in_process("audit --k 2 --q 2 --planted noise-reuse");
    assert_eq!(code, 4);
    assert!(out.contains("counterexample"));
}

#[test]
fn collusion_flags() {
    let (code, out, _) = in_process("audit --k 3 --q 2 --collude 3");
    assert_eq!(code, 0);
    assert!(out.contains("PASS             collusion C={3}"), "{out}");
    let (code, _, err) = in_process("audit --k 3 --q 2 --scheme dropout --collude 3");
    assert_eq!(code, 2);
    assert!(err.contains("dropout-tolerant"));
}

#[test]
fn rates_and_leakage() {
    let (code, out, _) = obagg("rates --k 5 --scheme dropout");
    assert_eq!(code, 0);
    assert!(out.contains("verdict: OK"));
    let (code, out, _) = obagg("demo-leakage --preset three-user");
    assert_eq!(code, 0);
    assert!(out.contains("27 of 27 sum values determine the inputs"));
    let (code, out, _) = obagg("demo-leakage --preset binary-f3");
    assert_eq!(code, 0);
    assert!(out.lines().any(|l| l.starts_with("sum=2") && l.contains("[1, 1]:1 ")));
    let (code, out, _) = in_process("demo-leakage --alphabets 0,1;0,1 --q 2");
    assert_eq!(code, 0);
    assert!(out.contains("0 of 2"));
    assert_eq!(in_process("demo-leakage --alphabets 0,1 --q 3").0, 2);
}

#[test]
fn reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in [
        "run --k 5 --q 97 --len 4 --scheme dropout --drop 2,4 --seed 11",
        "audit --k 2 --q 3 --scheme dropout",
        "rates --k 3",
        "demo-leakage",
    ] {
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        let (c1, o1, _) = in_process(&format!("{cmd} --output {}", a.display()));
        let (c2, o2, _) = in_process(&format!("{cmd} --output {}", b.display()));
        assert_eq!((c1, c2), (0, 0), "{cmd}");
        assert_eq!(o1, o2);
        let (ja, jb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(ja, jb);
        serde_json::from_slice::<serde_json::Value>(&ja).unwrap();
    }
}

#[test]
fn structured_audit_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("audit.json");
    let (code, _, _) = in_process(&format!("audit --k 2 --q 2 --output {}", path.display()));
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    for e in v["entries"].as_array().unwrap() {
        for field in ["name", "anchor", "verdict", "cells_examined"] {
            assert!(!e[field].is_null(), "{field} missing in {e}");
        }
    }
}

#[test]
fn help_exits_0() {
    let (code, out, _) = in_process("--help");
    assert_eq!(code, 0);
    assert!(out.contains("demo-leakage"));
}
