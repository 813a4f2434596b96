//! End-to-end checks of the command-line binary: exit codes, output
//! phrases, CSV layout, and byte-level reproducibility of sweeps.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_relayqos"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn help_lists_the_subcommands_and_exits_cleanly() {
    let out = run(&["--help"]);
    assert!(out.status.success(), "--help must exit 0");
    let text = stdout_of(&out);
    for word in ["solve", "sweep", "verify"] {
        assert!(text.contains(word), "help must mention `{word}`:\n{text}");
    }
}

#[test]
fn solve_reports_power_bound_and_matrix_agreement() {
    let out = run(&[
        "solve", "--mode", "linear", "--eta", "0.4,0.6", "--rho", "1", "--seed", "7", "--n", "3",
    ]);
    assert!(out.status.success(), "solve must exit 0");
    let text = stdout_of(&out);
    for phrase in [
        "channel: random draw, n=3, m=3, rho=1, seed=7",
        "receiver: linear (Wiener)",
        "total power:",
        "lower bound:",
        "relative gap:",
        "matrix stream MSEs:",
    ] {
        assert!(text.contains(phrase), "missing `{phrase}` in:\n{text}");
    }
}

#[test]
fn solve_covers_the_decision_feedback_receiver() {
    let out = run(&["solve", "--mode", "dfe", "--eta", "0.3,0.6", "--seed", "3"]);
    assert!(out.status.success(), "dfe solve must exit 0");
    let text = stdout_of(&out);
    assert!(
        text.contains("receiver: decision feedback"),
        "missing receiver line in:\n{text}"
    );
    assert!(text.contains("total power:"), "missing total in:\n{text}");
}

#[test]
fn argument_errors_exit_with_code_one() {
    let cases: &[&[&str]] = &[
        &["solve", "--bogus"],
        &["solve"],
        &["solve", "--eta", "1.5,0.4"],
        &["sweep", "--preset", "nonsense"],
        &["sweep", "--methods", "L-HA,XYZ"],
    ];
    for args in cases {
        let out = run(args);
        assert_eq!(
            out.status.code(),
            Some(1),
            "args {args:?} must exit 1, stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn sweeps_are_byte_identical_across_reruns_and_thread_caps() {
    let dir = std::env::temp_dir().join("relayqos_cli_sweep_test");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let first = dir.join("first.csv");
    let second = dir.join("second.csv");

    let out = bin()
        .args(sweep_args(&first))
        .output()
        .expect("first sweep runs");
    assert!(out.status.success(), "first sweep must exit 0");
    let out = bin()
        .args(sweep_args(&second))
        .env("RELAYQOS_THREADS", "2")
        .output()
        .expect("second sweep runs");
    assert!(out.status.success(), "second sweep must exit 0");

    let a = std::fs::read(&first).expect("first CSV");
    let b = std::fs::read(&second).expect("second CSV");
    assert_eq!(a, b, "same seed and config must produce identical bytes");

    let text = String::from_utf8(a).expect("CSV is UTF-8");
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("method,rho,eta,mean_power,mean_power_db,std_error,gap_to_lb,trials"),
        "header must match the contract"
    );
    let mut rows = 0usize;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 8, "every row has eight columns: {line}");
        let mean: f64 = fields[3].parse().expect("mean parses");
        let db: f64 = fields[4].parse().expect("dB parses");
        assert!(
            (db - 10.0 * mean.log10()).abs() < 1e-9,
            "dB column disagrees with the mean: {line}"
        );
        rows += 1;
    }
    assert_eq!(rows, 4, "default config sweeps four methods over one cell");
    std::fs::remove_dir_all(&dir).ok();
}

fn sweep_args(out: &Path) -> Vec<String> {
    vec![
        "sweep".into(),
        "--trials".into(),
        "4".into(),
        "--seed".into(),
        "9".into(),
        "--out".into(),
        out.display().to_string(),
    ]
}

#[test]
fn zero_thread_cap_is_rejected() {
    let out = bin()
        .args([
            "sweep",
            "--trials",
            "1",
            "--out",
            "/tmp/relayqos_rejected.csv",
        ])
        .env("RELAYQOS_THREADS", "0")
        .output()
        .expect("sweep runs");
    assert_eq!(out.status.code(), Some(1), "zero cap must exit 1");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("RELAYQOS_THREADS"),
        "error must name the variable: {err}"
    );
}

#[test]
fn verify_battery_passes_and_exits_zero() {
    let out = run(&["verify", "--instances", "25", "--seed", "5"]);
    assert!(
        out.status.success(),
        "verify must exit 0, stdout: {} stderr: {}",
        stdout_of(&out),
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout_of(&out);
    assert!(
        text.contains("all 6 checks passed"),
        "missing summary in:\n{text}"
    );
    assert_eq!(
        text.matches(": pass").count(),
        6,
        "each check prints a pass line:\n{text}"
    );
}
