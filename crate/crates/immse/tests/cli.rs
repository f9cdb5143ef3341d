use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn immse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_immse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn text(out: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    )
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(Result::unwrap).collect()
}

#[test]
fn gaussian_builtin_passes_at_one_quarter() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = immse(&["verify", "gaussian-memoryless-snr1", "--out", out_dir]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    let report = read_json(&dir.path().join("report.json"));
    let r = &report["reports"][0];
    assert_eq!(r["verdict"], "pass");
    assert!((r["lhs"]["value"].as_f64().unwrap() - 0.25).abs() < 1e-7);
    assert!((r["rhs_total"].as_f64().unwrap() - 0.25).abs() < 1e-7);
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["config_hash"], report["config_hash"]);
    let outputs: Vec<_> = manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(outputs, ["report.json", "summary.csv", "manifest.json"]);
    let rows = csv_rows(&dir.path().join("summary.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][12], "pass");
}

#[test]
fn causality_violation_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"label": "bad", "identity": "feedback-ext", "kind": "discrete", "n": 2,
            "prior": {"type": "gaussian"}, "g": ["w + y[1]", "w"], "rho": 1.0}"#,
    )
    .unwrap();
    let out = immse(&["verify", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(text(&out).contains("caus"), "{}", text(&out));
}

#[test]
fn tiny_budget_fails_on_standard_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.json");
    std::fs::write(
        &cfg,
        r#"{"label": "tiny", "identity": "memory-ext", "kind": "discrete",
            "prior": {"type": "bpsk", "per_step": true},
            "g": ["tanh(w)", "tanh(w + 0.3*y[1])", "tanh(w + 0.3*y[2])", "tanh(w + 0.3*y[3])"],
            "rho": 1.0, "N": 10, "seed": 3}"#,
    )
    .unwrap();
    let out = immse(&["verify", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 1, "{}", text(&out));
    assert!(text(&out).contains("SE above tolerance"), "{}", text(&out));
    let report = read_json(&dir.path().join("o/report.json"));
    assert_eq!(report["reports"][0]["verdict"], "fail");
}

#[test]
fn missing_file_and_bad_json_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    let out = immse(&["verify", "/nonexistent/cfg.json", "--out", o.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let cfg = dir.path().join("broken.json");
    std::fs::write(&cfg, "{ not json").unwrap();
    assert_eq!(code(&immse(&["verify", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()])), 2);
    std::fs::write(
        &cfg,
        r#"{"label": "x", "identity": "not-a-kind", "kind": "discrete",
            "prior": {"type": "gaussian"}, "g": ["w"], "rho": 1.0}"#,
    )
    .unwrap();
    let out = immse(&["verify", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(text(&out).contains("unknown identity kind"));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let o = dir.path().join(name);
        let out = immse(&["verify", "tanh-feedback-n4", "--n", "300", "--k", "100", "--seed", "11", "--out", o.to_str().unwrap()]);
        assert!(code(&out) == 0 || code(&out) == 1);
        (
            std::fs::read(o.join("report.json")).unwrap(),
            std::fs::read(o.join("summary.csv")).unwrap(),
        )
    };
    let (a, sa) = run("a");
    let (b, sb) = run("b");
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    let (c, _) = {
        let o = dir.path().join("c");
        immse(&["verify", "tanh-feedback-n4", "--n", "300", "--k", "100", "--seed", "12", "--out", o.to_str().unwrap()]);
        (std::fs::read(o.join("report.json")).unwrap(), ())
    };
    assert_ne!(a, c);
}

#[test]
fn jobs_do_not_change_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("many.json");
    let scenario = |label: &str, snr: f64| {
        format!(
            r#"{{"label": "{label}", "identity": "immse-memoryless", "kind": "discrete",
                "prior": {{"type": "bpsk"}}, "g": ["w"], "snr": {snr}, "N": 2000, "seed": 5}}"#
        )
    };
    std::fs::write(
        &cfg,
        format!(r#"{{"scenarios": [{}, {}, {}]}}"#, scenario("a", 0.5), scenario("b", 1.0), scenario("c", 2.0)),
    )
    .unwrap();
    let run = |jobs: &str| {
        let o = dir.path().join(format!("j{jobs}"));
        let out = immse(&["verify", cfg.to_str().unwrap(), "--jobs", jobs, "--out", o.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", text(&out));
        std::fs::read(o.join("report.json")).unwrap()
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn path_dump_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    let out = immse(&["verify", "linear-feedback-n4", "--dump-paths", "5", "--out", o.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let mut r = csv::Reader::from_path(o.join("paths-linear-feedback-n4.csv")).unwrap();
    let header: Vec<_> = r.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(header, ["path_index", "i", "w", "z", "g", "y", "S", "D"]);
    assert_eq!(r.records().count(), 5 * 4);
}

#[test]
fn sweep_over_rho_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    let out = immse(&["sweep", "gaussian-memoryless", "--axis", "rho", "--grid", "0.5,1,2", "--out", o.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    let rows = csv_rows(&o.join("sweep.csv"));
    assert_eq!(rows.len(), 3);
    for row in &rows {
        let rho: f64 = row[1].parse().unwrap();
        let rhs: f64 = row[11].parse().unwrap();
        assert!((rhs - rho / (1.0 + rho * rho)).abs() < 1e-9, "{row:?}");
    }
}

#[test]
fn sweep_over_m_converges() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    let out = immse(&["sweep", "ct-linear-feedback", "--axis", "m", "--grid", "16,64,256", "--out", o.to_str().unwrap()]);
    // the correction term keeps this scenario failing at every m
    assert_eq!(code(&out), 1, "{}", text(&out));
    let rows = csv_rows(&o.join("sweep.csv"));
    let gap: Vec<f64> = rows.iter().map(|r| r[12].parse().unwrap()).collect();
    let first = (gap[1] - gap[0]).abs();
    let second = (gap[2] - gap[1]).abs();
    assert!(second < first, "{gap:?}");
}

#[test]
fn sweep_usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    let o = o.to_str().unwrap();
    assert_eq!(code(&immse(&["sweep", "gaussian-memoryless", "--axis", "rho", "--grid", "", "--out", o])), 2);
    assert_eq!(code(&immse(&["sweep", "gaussian-memoryless", "--axis", "zeta", "--grid", "1", "--out", o])), 2);
    assert_eq!(code(&immse(&["sweep", "gaussian-memoryless", "--axis", "rho", "--grid", "2,1", "--out", o])), 2);
    assert_eq!(code(&immse(&["sweep", "gaussian-memoryless", "--axis", "t", "--grid", "1", "--out", o])), 2);
}

#[test]
fn list_catalog() {
    let out = immse(&["list"]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().count() >= 9);
    for name in [
        "gaussian-memoryless",
        "bpsk-memoryless",
        "linear-feedback-n4",
        "tanh-feedback-n4",
        "memory-channel-n4",
        "debruijn-gaussian",
        "debruijn-mixture",
        "ct-constant-message",
        "ct-linear-feedback",
    ] {
        assert!(stdout.contains(name), "{name}");
    }
    let out = immse(&["list", "--json"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.as_array().unwrap().len() >= 9);
    assert!(v[0]["description"].is_string());
}

#[test]
fn usage_errors_exit_2() {
    let out = immse(&["list", "--bogus"]);
    assert_eq!(code(&out), 2);
    assert!(text(&out).contains("Usage"));
    assert_eq!(code(&immse(&[])), 2);
    assert_eq!(code(&immse(&["verify"])), 2);
    let help = immse(&["verify", "--help"]);
    assert_eq!(code(&help), 0);
    assert!(text(&help).contains("path_index,i,w,z,g,y,S,D"));
}
