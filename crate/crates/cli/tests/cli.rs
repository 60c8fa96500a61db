use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ibvs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ibvs")).args(args).output().expect("binary runs")
}

fn config(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .display()
        .to_string()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn shipped_inverse_config_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = ibvs(&["simulate", &config("paper_sec4_inverse.cfg"), "--out", path(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["trace.csv", "summary.json", "audit.json", "scenario.cfg"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["rows"], 6001);
    assert!(summary["abort"].is_null());
    assert!(summary["late_max_error_px"].as_f64().unwrap() < 0.5);
}

#[test]
fn kinematic_with_ideal_servo() {
    let dir = tempfile::tempdir().unwrap();
    let o = ibvs(&[
        "simulate",
        &config("paper_sec4_inverse.cfg"),
        "--controller",
        "kinematic",
        "--servo",
        "ideal",
        "--duration",
        "3",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let resolved = std::fs::read_to_string(dir.path().join("scenario.cfg")).unwrap();
    assert!(resolved.contains("controller = \"kinematic\""));
    assert!(resolved.contains("mode = \"ideal\""));
    let header = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(header.lines().next().unwrap().contains("qd_cmd_1"));
}

#[test]
fn negative_gain_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("paper_sec4_inverse.cfg"))
        .unwrap()
        .replace("k = 40.0", "k = [[40.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 40.0]]");
    let cfg = dir.path().join("neg.cfg");
    std::fs::write(&cfg, text).unwrap();
    let o = ibvs(&["simulate", path(&cfg), "--out", path(&dir.path().join("out"))]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("neg.cfg:") && err.contains("gains.k"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = ibvs(&["simulate", &config("paper_sec4_inverse.cfg"), "--set", "arm.wingspan=3", "--out", path(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("wingspan"));
}

#[test]
fn aborted_run_exits_3_with_reason() {
    let dir = tempfile::tempdir().unwrap();
    let o = ibvs(&[
        "simulate",
        &config("paper_sec4_inverse.cfg"),
        "--set",
        "initial_estimates.dynamic=[0.0, 0.0, 0.0, 0.0, 1e9, 0.0]",
        "--duration",
        "1",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("aborted at t ="), "{}", stderr(&o));
    let summary = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
    assert!(summary.contains("\"reason\""));
}

#[test]
fn check_passes_and_reports_json() {
    let o = ibvs(&["check", "--suite", "regressors"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["suites"][0]["suite"], "regressors");
    assert!(report["suites"][0]["measures"].as_array().unwrap().len() >= 8);
}

#[test]
fn check_all_passes() {
    let o = ibvs(&["check", "--suite", "all"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn injected_scaling_fails_regressor_suite() {
    let o = ibvs(&["check", "--suite", "regressors", "--inject", "scale-image-rows=1.001"]);
    assert_eq!(code(&o), 4);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["passed"], false);
}

#[test]
fn injected_sign_flip_fails_lyapunov_suite() {
    let o = ibvs(&["check", "--suite", "lyapunov", "--inject", "flip-perp-sign"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn unknown_suite_is_rejected() {
    assert_eq!(code(&ibvs(&["check", "--suite", "everything"])), 2);
}

#[test]
fn plot_writes_requested_figures() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = ibvs(&["simulate", &config("paper_sec4_transpose.cfg"), "--duration", "2", "--out", path(out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let trace = out.join("trace.csv");
    let o = ibvs(&["plot", path(&trace), "--figures", "5,6,7", "--out", path(out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let fig6 = std::fs::read_to_string(out.join("fig6.svg")).unwrap();
    assert_eq!(fig6.matches(r#"class="series""#).count(), 2);
    assert!(fig6.contains(r#"data-column="z""#) && fig6.contains(r#"data-column="z_hat""#));
    let fig5 = std::fs::read_to_string(out.join("fig5.svg")).unwrap();
    assert!(fig5.contains("Image-space position tracking errors"));
    let fig7 = std::fs::read_to_string(out.join("fig7.svg")).unwrap();
    assert_eq!(fig7.matches(r#"class="series""#).count(), 3);
}

#[test]
fn plot_of_empty_trace_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = ibvs(&["simulate", &config("paper_sec4_inverse.cfg"), "--duration", "0", "--out", path(out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1, "header only");
    let figs = out.join("figs");
    let o = ibvs(&["plot", path(&out.join("trace.csv")), "--figures", "3", "--out", path(&figs)]);
    assert_ne!(code(&o), 0);
    assert!(!figs.join("fig3.svg").exists());
}

#[test]
fn plot_reports_missing_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ibvs(&["simulate", &config("paper_sec4_kinematic.cfg"), "--duration", "1", "--out", path(out)]);
    let o = ibvs(&["plot", path(&out.join("trace.csv")), "--figures", "4", "--out", path(out)]);
    assert_ne!(code(&o), 0);
    assert!(stderr(&o).contains("tau_1"), "{}", stderr(&o));
}

#[test]
fn help_documents_trace_columns() {
    let o = ibvs(&["simulate", "--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("schema version"));
    for col in ["dx_*", "z_hat", "a_z_perp_hat_*", "v2dot_bound"] {
        assert!(text.contains(col), "{col}");
    }
}
